"""Hyperbolic metrics on the covering surface by a Newton solve of Liouville.

The hyperbolic metric is written ``g = exp(2u) * ghat`` with a smooth
background ``ghat`` (the pulled-back sphere metric, smoothed at the
ramification points).  With ``Khat = -d_z d_zbar log ghat`` the equation
``d_z d_zbar log g = g`` becomes ``2 d_z d_zbar u = exp(2u) ghat + Khat``,
whose P1 weak form on the mesh reads

    F(u) = S u + diag(m) exp(2u) + k = 0,

with ``S`` the cotangent stiffness matrix, ``m_n = int ghat phi_n dA`` and
``k_n = int Khat phi_n dA``.  Summing over nodes gives the discrete
Gauss-Bonnet identity ``sum m exp(2u) = -sum k`` exactly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .covering import TargetMetric
from .mesh import CHART_T, CHART_WP, QUAD_BARY, QUAD_W, CoveringMesh

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Numerical failure (non-convergence, breakdown)."""


def _blend(x):
    """``(1 - x)^4`` on ``[0, 1]`` (zero beyond) with two derivatives; C^3 at ``x = 1``."""
    x = np.asarray(x, dtype=float)
    y = np.clip(1 - x, 0, None)
    return y**4, -4 * y**3, 12 * y**2


def background(mesh: CoveringMesh, chart: np.ndarray, z: np.ndarray):
    """Background density ``ghat`` and ``Khat`` in the given charts.

    * ``w`` and ``w'`` charts: the sphere metric ``h``, with ``Khat = h``;
    * ramification chart: ``h(e + t^2) * 4 * M(|t|^2)`` where
      ``M(r) = r + delta (1 - r / rho0)^4`` removes the zero at ``t = 0``;
      ``rho0`` is the disc radius in ``|t|^2`` and ``delta < rho0 / 4`` keeps
      ``M`` increasing.
    """
    tm = TargetMetric(1)
    chart, z = np.broadcast_arrays(chart, z)
    gh = np.empty(z.shape)
    kh = np.empty(z.shape)
    base = chart < CHART_T
    hb = tm.h(z[base]).real
    gh[base], kh[base] = hb, hb
    tc = ~base
    if np.any(tc):
        e = mesh.current_e
        t = z[tc]
        w = e[chart[tc] - CHART_T] + t * t
        h = tm.h(w).real
        r = np.abs(t) ** 2
        psi, d1, d2 = _blend(r / mesh.rho0)
        M = r + mesh.delta * psi
        M1 = 1 + mesh.delta * d1 / mesh.rho0
        M2 = mesh.delta * d2 / mesh.rho0**2
        L1 = M1 / M
        L2 = M2 / M - L1**2
        gh[tc] = h * 4 * M
        kh[tc] = 4 * h * r - (r * L2 + L1)
    return gh, kh


def stiffness_matrix(mesh: CoveringMesh) -> sp.csr_matrix:
    """Cotangent stiffness ``S_ij = int grad phi_i . grad phi_j dx dy``.

    Each triangle uses its own chart; the Dirichlet energy is conformally
    invariant, so mixing charts is consistent.
    """
    dz = mesh.dz_phi
    dzb = mesh.dzbar_phi
    loc = 4 * mesh.tri_area[:, None, None] * np.real(dz[:, :, None] * dzb[:, None, :])
    rows = np.repeat(mesh.tris, 3, axis=1)
    cols = np.tile(mesh.tris, (1, 3))
    n = mesh.n_nodes
    return sp.csr_matrix((loc.reshape(len(loc), -1).ravel(), (rows.ravel(), cols.ravel())), shape=(n, n))


def load_vector(mesh: CoveringMesh, density_q: np.ndarray) -> np.ndarray:
    """``int f phi_n dA`` for ``f`` given at quadrature points (``dA = 2 dx dy``)."""
    wq = 2 * mesh.quad_weights * density_q  # (T, 7)
    contrib = wq @ QUAD_BARY  # (T, 3)
    return np.bincount(mesh.tris.ravel(), weights=contrib.ravel(), minlength=mesh.n_nodes)


@dataclass
class HyperbolicMetric:
    """Solved conformal factor on a mesh.

    ``u`` is a global scalar; ``g_node`` is the density of ``g`` in each
    node's owner chart; ``mass`` holds the lumped weights ``int g phi_n dA``.
    """

    mesh: CoveringMesh
    u: np.ndarray
    m: np.ndarray
    k: np.ndarray
    residual: float
    iterations: int
    history: list = field(default_factory=list)

    @cached_property
    def ghat_node(self) -> np.ndarray:
        return background(self.mesh, self.mesh.node_chart, self.mesh.node_z)[0]

    @cached_property
    def g_node(self) -> np.ndarray:
        return np.exp(2 * self.u) * self.ghat_node

    @cached_property
    def log_g_node(self) -> np.ndarray:
        return 2 * self.u + np.log(self.ghat_node)

    @cached_property
    def mass(self) -> np.ndarray:
        return self.m * np.exp(2 * self.u)

    @property
    def area(self) -> float:
        return float(np.sum(self.mass))

    @property
    def gauss_bonnet_target(self) -> float:
        return 2 * np.pi * (2 * self.mesh.config.genus - 2)

    @property
    def area_rel_error(self) -> float:
        return abs(self.area - self.gauss_bonnet_target) / self.gauss_bonnet_target

    @property
    def curvature_integral(self) -> float:
        """``-int Khat dA``; equals the area exactly at a discrete solution."""
        return float(-np.sum(self.k))

    def u_quad(self) -> np.ndarray:
        """P1 interpolant of ``u`` at quadrature points, ``(T, 7)``."""
        return self.u[self.mesh.tris] @ QUAD_BARY.T

    def g_quad(self) -> np.ndarray:
        """Density of ``g`` at quadrature points in each triangle's chart."""
        mesh = self.mesh
        gh, _ = background(mesh, mesh.tri_chart[:, None], mesh.quad_points)
        return np.exp(2 * self.u_quad()) * gh


def liouville_system(mesh: CoveringMesh):
    """Assemble ``S``, ``m`` and ``k`` of the discrete equation."""
    S = stiffness_matrix(mesh)
    gh, kh = background(mesh, mesh.tri_chart[:, None], mesh.quad_points)
    m = load_vector(mesh, gh) + mesh.interface_load(lambda c, z: background(mesh, c, z)[0])
    k = load_vector(mesh, kh) + mesh.interface_load(lambda c, z: background(mesh, c, z)[1])
    return S, m, k


def solve_liouville(
    mesh: CoveringMesh,
    initial_guess: np.ndarray | None = None,
    tol: float = 1e-9,
    max_iter: int = 60,
    target_tol: float = 1e-13,
) -> HyperbolicMetric:
    """Damped Newton iteration for ``F(u) = S u + m exp(2u) + k = 0``.

    The relative nodal residual ``max |F_n| / m_n`` must fall below ``tol``;
    iterations continue (while they still help) down to ``target_tol``.
    The energy ``E(u) = u.S.u/2 + sum m exp(2u)/2 + k.u`` is strictly convex
    and drives the backtracking line search.
    """
    S, m, k = liouville_system(mesh)
    if np.any(m <= 0):
        raise SolverError("non-positive background mass")
    u = np.zeros(mesh.n_nodes) if initial_guess is None else np.array(initial_guess, dtype=float)

    def energy(v):
        return 0.5 * v @ (S @ v) + 0.5 * np.sum(m * np.exp(2 * v)) + k @ v

    def resid(v):
        return S @ v + m * np.exp(2 * v) + k

    F = resid(u)
    E = energy(u)
    hist = [float(np.max(np.abs(F) / m))]
    it = 0
    for it in range(1, max_iter + 1):
        J = (S + sp.diags(2 * m * np.exp(2 * u))).tocsc()
        du = -spla.splu(J).solve(F)
        step = 1.0
        r_old = hist[-1]
        while True:
            un = u + step * du
            En = energy(un)
            Fn = resid(un)
            rn = float(np.max(np.abs(Fn) / m))
            # energy decrease drives the global phase; near round-off level the
            # energy is flat and a halved residual is the meaningful test
            if np.isfinite(En) and (En <= E + 1e-4 * step * (F @ du) or rn < 0.5 * r_old):
                break
            step *= 0.5
            if step < 1e-10:
                break
        if step < 1e-10:
            if r_old < tol:
                break
            raise SolverError(f"line search failed at iteration {it}, residual {r_old:.3e}")
        u, E, F = un, En, Fn
        r = rn
        hist.append(r)
        log.debug("newton %d: residual %.3e step %.3g", it, r, step)
        if r < target_tol or (r < tol and r > 0.5 * hist[-2]):
            break
    if hist[-1] >= tol:
        raise SolverError(f"Newton did not converge in {max_iter} iterations (residual {hist[-1]:.3e})")
    return HyperbolicMetric(mesh=mesh, u=u, m=m, k=k, residual=hist[-1], iterations=it, history=hist)


def _stencil(r: int, h: float, second: str):
    """Real-parameter stencil points ``(2r,)`` for centered differences.

    Real parameters are ordered ``(x_1, y_1, ..., x_r, y_r)`` with
    ``s_i = x_i + i y_i``.
    """
    n = 2 * r
    pts = [np.zeros(n)]
    for a in range(n):
        for sgn in (1, -1):
            p = np.zeros(n)
            p[a] = sgn * h
            pts.append(p)
    if second == "full":
        for a in range(n):
            for b in range(a + 1, n):
                for sa in (1, -1):
                    for sb in (1, -1):
                        p = np.zeros(n)
                        p[a], p[b] = sa * h, sb * h
                        pts.append(p)
    return pts


def _derivatives(values: dict, r: int, h: float, second: str):
    """Complex first and second derivatives from stencil values keyed by point tuples."""
    n = 2 * r
    f0 = values[(0.0,) * n]

    def at(**kw):
        p = [0.0] * n
        for k, v in kw.items():
            p[int(k[1:])] = v
        return values[tuple(p)]

    grad = []
    hess = [[None] * n for _ in range(n)]
    for a in range(n):
        fp, fm = at(**{f"p{a}": h}), at(**{f"p{a}": -h})
        grad.append((fp - fm) / (2 * h))
        hess[a][a] = (fp - 2 * f0 + fm) / h**2
    if second == "full":
        for a in range(n):
            for b in range(a + 1, n):
                hab = (
                    at(**{f"p{a}": h, f"p{b}": h}) - at(**{f"p{a}": h, f"p{b}": -h})
                    - at(**{f"p{a}": -h, f"p{b}": h}) + at(**{f"p{a}": -h, f"p{b}": -h})
                ) / (4 * h**2)
                hess[a][b] = hess[b][a] = hab
    d1 = np.array([0.5 * (grad[2 * i] - 1j * grad[2 * i + 1]) for i in range(r)])
    dmix = np.full((r, r) + f0.shape, np.nan + 0j)
    dhol = np.full((r, r) + f0.shape, np.nan + 0j)
    for i in range(r):
        xi, yi = 2 * i, 2 * i + 1
        for j in range(r):
            xj, yj = 2 * j, 2 * j + 1
            if i != j and second != "full":
                continue
            if i == j and second != "full":
                dmix[i, i] = 0.25 * (hess[xi][xi] + hess[yi][yi])
                continue
            dmix[i, j] = 0.25 * (hess[xi][xj] + hess[yi][yj] + 1j * (hess[xi][yj] - hess[yi][xj]))
            dhol[i, j] = 0.25 * (hess[xi][xj] - hess[yi][yj] - 1j * (hess[xi][yj] + hess[yi][xj]))
    return d1, dmix, dhol


@dataclass
class MetricFamily:
    """Hyperbolic metrics over a stencil of branch-move parameters.

    The path is ``e(s) = e_0 + sum_i s_i v_i``.  Mesh nodes move with
    ``s`` along :meth:`CoveringMesh.mesh_velocity` (``velocity[i]`` per
    direction): disc nodes keep their ``t``, base nodes move smoothly in ``w``.
    Nodal finite differences are therefore derivatives *following the
    nodes*; :mod:`hurwitzwp.family` converts them to fixed chart coordinates.

    ``log_g`` is the log density in the node's owner chart; ``d1[i]``
    is ``d_i log g``; ``dmix[i, j]`` is ``d_i d_jbar log g`` and ``dhol[i, k]``
    is ``d_i d_k log g`` (``nan`` when not computed), all along the nodes.
    Values come from the spacing ``h_s / 2``; the ``*_noise`` arrays hold the
    Richardson error estimate ``(D(h_s) - D(h_s / 2)) / 3``.
    """

    mesh: CoveringMesh
    metric: HyperbolicMetric
    directions: np.ndarray
    h_s: float
    second: str
    d1: np.ndarray
    dmix: np.ndarray
    dhol: np.ndarray
    d1_noise: np.ndarray
    dmix_noise: np.ndarray
    dhol_noise: np.ndarray
    stencil_areas: list
    velocity: np.ndarray
    dbar_velocity: np.ndarray

    @property
    def r(self) -> int:
        return len(self.directions)

    @property
    def log_g(self) -> np.ndarray:
        return self.metric.log_g_node

    @property
    def g(self) -> np.ndarray:
        return self.metric.g_node

    def noise_floor(self, which: str = "d1") -> float:
        arr = getattr(self, f"{which}_noise")
        return float(np.nanmax(np.abs(arr))) if np.any(np.isfinite(arr)) else 0.0

    def hermitian_defect(self) -> float:
        """``max |d_i d_jbar log g - conj(d_j d_ibar log g)|`` over nodes."""
        if self.second != "full":
            return 0.0
        return float(np.nanmax(np.abs(self.dmix - np.conj(np.swapaxes(self.dmix, 0, 1)))))


def metric_family(
    mesh: CoveringMesh,
    directions,
    h_s: float = 1e-3,
    second: str = "diag",
    metric: HyperbolicMetric | None = None,
    tol: float = 1e-9,
    richardson: bool = True,
    threads: int = 1,
) -> MetricFamily:
    """Solve the stencil of a branch-move family and difference it at fixed chart coordinates.

    ``second`` is ``"none"`` (first derivatives), ``"diag"`` (adds
    ``d_i d_ibar``) or ``"full"`` (all mixed and holomorphic second derivatives).
    """
    if second not in ("none", "diag", "full"):
        raise ValueError(f"unknown second-derivative mode {second!r}")
    V = np.atleast_2d(np.asarray(directions, dtype=complex))
    if V.shape[1] != mesh.config.b:
        raise ValueError(f"directions need {mesh.config.b} velocities each, got {V.shape[1]}")
    r = len(V)
    flows = [mesh.mesh_velocity(v) for v in V]
    base = metric if metric is not None else solve_liouville(mesh, tol=tol)

    def log_g_at(p: np.ndarray) -> np.ndarray:
        if not np.any(p):
            return base.log_g_node
        s = p[0::2] + 1j * p[1::2]
        vel = s @ V
        m = mesh.moved(vel, 1.0)
        try:
            sol = solve_liouville(m, initial_guess=base.u, tol=tol)
        except SolverError as exc:
            raise SolverError(f"stencil point s={s.tolist()}: {exc}") from None
        areas.append(sol.area)
        return sol.log_g_node

    def run(h: float):
        pts = _stencil(r, h, "full" if second == "full" else "axes")
        if threads > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(threads) as ex:
                vals = list(ex.map(log_g_at, pts))
        else:
            vals = [log_g_at(p) for p in pts]
        return _derivatives({tuple(p): v for p, v in zip(pts, vals)}, r, h, second if second != "none" else "diag")

    areas: list = []
    d1, dmix, dhol = run(h_s)
    if richardson:
        # report the h_s/2 values; for a second-order stencil their error is
        # estimated by a third of the difference to the h_s values
        e1, emix, ehol = run(h_s / 2)
        n1, nmix, nhol = (d1 - e1) / 3, (dmix - emix) / 3, (dhol - ehol) / 3
        d1, dmix, dhol = e1, emix, ehol
    else:
        n1, nmix, nhol = (np.full_like(x, np.nan) for x in (d1, dmix, dhol))
    if second == "none":
        dmix = np.full_like(dmix, np.nan)
        nmix = np.full_like(nmix, np.nan)
    return MetricFamily(
        mesh=mesh, metric=base, directions=V, h_s=h_s, second=second,
        d1=d1, dmix=dmix, dhol=dhol, d1_noise=n1, dmix_noise=nmix, dhol_noise=nhol,
        stencil_areas=areas,
        velocity=np.array([vel[0] for vel in flows]),
        dbar_velocity=np.array([vel[1] for vel in flows]),
    )
