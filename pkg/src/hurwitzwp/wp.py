"""The Weil-Petersson Gram matrix ``G = G0 + G1`` and its Kaehler symmetry.

``G0_{i jbar} = int phi_{i jbar} beta^* omega`` with ``beta^* omega = h |zeta|^2 dA``
and ``G1_{i jbar} = int u_i ubar_j h g dA``.  Every entry carries a
quadrature error estimate: the difference between the lumped nodal rule and
a seven-point rule applied to the piecewise-linear interpolant of the same
nodal data.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .covering import TargetMetric
from .curvature import FiberQuadrature, MobiusFamily, fixed_x_gram
from .family import FamilyCalculus
from .mesh import CHART_T, QUAD_BARY, CoveringMesh
from .operators import OperatorContext
from .uniformization import metric_family


class WPError(RuntimeError):
    """The assembled Gram matrix violates a structural invariant."""


def _omega_nodes(mesh: CoveringMesh, target: TargetMetric) -> np.ndarray:
    """Lumped weights of ``beta^* omega = h |zeta|^2 dA`` per node."""
    h = target.h(mesh.node_frame_coord).real
    return h * np.abs(mesh.zeta) ** 2 * 2 * mesh.node_lumped_area()


def _omega_quad(mesh: CoveringMesh, target: TargetMetric, ctx: OperatorContext | None = None) -> np.ndarray:
    x = ctx.quad_frame_coord() if ctx is not None else None
    if x is None:
        raise ValueError("need an operator context for quadrature-point coordinates")
    zeta = np.ones(x.shape, dtype=complex)
    tch = mesh.tri_chart >= CHART_T
    zeta[tch] = 2 * mesh.quad_points[tch]
    return target.h(x).real * np.abs(zeta) ** 2 * 2 * mesh.quad_weights


def g0_entry(phi: np.ndarray, mesh: CoveringMesh, target: TargetMetric | None = None, ctx: OperatorContext | None = None):
    """``int phi beta^* omega`` from node values of ``phi``; returns ``(value, error)``.

    With ``ctx`` the value is the seven-point rule on the P1 interpolant and
    the error estimate is its distance to the lumped nodal rule, which is only
    first order on the graded mesh and so bounds the error from above.
    Without ``ctx`` the lumped value is returned with error ``nan``.
    """
    target = target if target is not None else TargetMetric(1)
    lumped = complex(np.sum(np.asarray(phi) * _omega_nodes(mesh, target)))
    if ctx is None:
        return lumped, float("nan")
    interp = np.asarray(phi)[mesh.tris] @ QUAD_BARY.T
    val = complex(np.sum(interp * _omega_quad(mesh, target, ctx)))
    return val, abs(val - lumped)


def g1_entry(u_i: np.ndarray, u_j: np.ndarray, ctx: OperatorContext):
    """``int u_i ubar_j h g dA`` from node values in the node frame; returns ``(value, error)``.

    Seven-point rule on the P1 interpolants; the error estimate is the
    distance to the lumped rule as in :func:`g0_entry`.
    """
    mesh = ctx.mesh
    lumped = ctx.inner0(u_i, u_j)
    qi = mesh.section_to_tri(u_i) @ QUAD_BARY.T
    qj = mesh.section_to_tri(u_j) @ QUAD_BARY.T
    val = complex(np.sum(qi * np.conj(qj) * ctx.h_quad * ctx.metric.g_quad() * 2 * mesh.quad_weights))
    return val, abs(val - lumped)


@dataclass
class WPGram:
    """``G0``, ``G1``, ``G = G0 + G1`` with per-entry error estimates."""

    G0: np.ndarray
    G1: np.ndarray
    error: np.ndarray
    labels: list = field(default_factory=list)
    null_tol: float = 1e-10

    @property
    def G(self) -> np.ndarray:
        return self.G0 + self.G1

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.G + self.G.conj().T))

    @property
    def min_eig(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def error_norm(self) -> float:
        """Spectral-norm bound on the eigenvalue shift caused by the entry errors."""
        return float(np.linalg.norm(self.error, 2))

    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.G - self.G.conj().T)))

    def null_directions(self) -> list[int]:
        """Directions whose row and column vanish (WP-null, non-effective)."""
        scale = max(float(np.max(np.abs(self.G))), 1e-300)
        row = np.max(np.abs(self.G), axis=1)
        return [int(i) for i in np.nonzero(row <= self.null_tol * scale)[0]]

    def positive_definite(self) -> bool:
        """``min_eig`` exceeds the quadrature error bound."""
        return self.min_eig > self.error_norm

    def check(self, tol: float | None = None) -> "WPGram":
        tol = tol if tol is not None else max(10 * float(np.max(self.error)), 1e-12)
        if self.hermitian_defect() > tol:
            raise WPError(f"Gram matrix is not hermitian: defect {self.hermitian_defect():.3e} > {tol:.3e}")
        return self

    def to_dict(self) -> dict:
        def cm(a):
            return [[[float(z.real), float(z.imag)] for z in row] for row in a]

        return {
            "G0": cm(self.G0),
            "G1": cm(self.G1),
            "G": cm(self.G),
            "error": self.error.tolist(),
            "min_eig": self.min_eig,
            "eigenvalue_error_bound": self.error_norm,
            "positive_definite": self.positive_definite(),
            "null_directions": self.null_directions(),
            "labels": list(self.labels),
        }


def wp_gram_fixed_x(fam: MobiusFamily, ctx: OperatorContext, labels=None) -> WPGram:
    """Gram matrix of a fixed-surface family: ``G0 = 0`` and ``G1`` by seven-point quadrature.

    The error estimate compares with the lumped rule on node values.
    """
    quad = FiberQuadrature.from_context(ctx)
    G1 = fixed_x_gram(fam, quad)
    mesh = ctx.mesh
    f = fam.fields(mesh.node_frame_coord, mesh.node_frame)["u"]
    lumped = np.array([[ctx.inner0(f[i], f[j]) for j in range(fam.r)] for i in range(fam.r)])
    err = np.abs(G1 - lumped)
    return WPGram(np.zeros_like(G1), G1, err, labels or [f"q={q.tolist()}" for q in fam.q]).check()


def wp_gram_family(fc: FamilyCalculus, ctx: OperatorContext | None = None, labels=None) -> WPGram:
    """Gram matrix of a branch-move family; needs mixed second derivatives for ``i != j``."""
    ctx = ctx if ctx is not None else OperatorContext(fc.family.metric, fc.target)
    r = fc.r
    G0 = np.zeros((r, r), dtype=complex)
    G1 = np.zeros((r, r), dtype=complex)
    err = np.zeros((r, r))
    reps = [fc.harmonic_rep(i).values for i in range(r)]
    for i in range(r):
        for j in range(r):
            G0[i, j], e0 = g0_entry(fc.phi(i, j).values, fc.mesh, fc.target, ctx)
            G1[i, j], e1 = g1_entry(reps[i], reps[j], ctx)
            err[i, j] = e0 + e1
    return WPGram(G0, G1, err, labels or [f"direction {i}" for i in range(r)])


def wp_gram(directions, mesh: CoveringMesh, ctx: OperatorContext | None = None, **family_kw) -> WPGram:
    """Assemble the Gram matrix for a list of :class:`hurwitzwp.family.DeformationDirection`.

    All directions must be of one kind: fixed-surface (``q``) or branch moves.
    """
    kinds = {d.kind for d in directions}
    if len(kinds) != 1:
        raise ValueError("directions must be all fixed-x or all branch-move")
    labels = [d.label for d in directions]
    if kinds == {"fixed-x"}:
        if ctx is None:
            from .uniformization import solve_liouville

            ctx = OperatorContext(solve_liouville(mesh))
        return wp_gram_fixed_x(MobiusFamily([d.q for d in directions]), ctx, labels)
    family_kw.setdefault("second", "full" if len(directions) > 1 else "diag")
    metric = ctx.metric if ctx is not None else None
    fam = metric_family(mesh, [d.velocities for d in directions], metric=metric, **family_kw)
    fc = FamilyCalculus(fam)
    return wp_gram_family(fc, ctx, labels).check()


# -- Kaehler symmetry ------------------------------------------------------------

@dataclass
class KahlerReport:
    residual: float
    noise_floor: float
    dG: np.ndarray
    detail: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.residual / self.noise_floor if self.noise_floor > 0 else float("inf")


def kahler_residual(Gfun, r: int, i: int, k: int, h_s: float = 1e-3, g_noise: float = 0.0) -> KahlerReport:
    """``max_j |d_k G_{i jbar} - d_i G_{k jbar}|`` by Richardson-extrapolated central differences.

    The noise floor adds the Richardson error estimate of the derivatives
    and the propagated sampling error ``g_noise`` of ``Gfun``.
    """
    s0 = np.zeros(r, dtype=complex)
    d1 = _first_derivs(Gfun, s0, r, h_s)
    d2 = _first_derivs(Gfun, s0, r, h_s / 2)
    dG = (4 * d2 - d1) / 3
    rich = np.abs(d2 - d1) / 3
    res = np.abs(dG[k, i, :] - dG[i, k, :])
    floor = float(np.max(rich[k, i, :] + rich[i, k, :])) + 2 * 2 * g_noise / (h_s / 2)
    return KahlerReport(float(np.max(res)), floor, dG, {"richardson": float(np.max(rich)), "g_noise": g_noise})


def _first_derivs(Gfun, s0: np.ndarray, r: int, h: float) -> np.ndarray:
    """``d_k G`` (indexed ``[k, i, j]``) by central differences along ``s_k`` and ``i s_k``."""
    e = np.eye(r)
    out = []
    for k in range(r):
        gx = (Gfun(s0 + h * e[k]) - Gfun(s0 - h * e[k])) / (2 * h)
        gy = (Gfun(s0 + 1j * h * e[k]) - Gfun(s0 - 1j * h * e[k])) / (2 * h)
        out.append(0.5 * (gx - 1j * gy))
    return np.array(out)


def family_gram_function(mesh: CoveringMesh, velocities, h_s: float = 1e-3, tol: float = 1e-10, threads: int = 1):
    """``s -> G^WP(s)`` for branch moves ``e + sum_k s_k v_k``, each point a fresh family solve.

    Returns the function and a list collecting the sampling-error estimate of
    every evaluation.
    """
    V = np.atleast_2d(np.asarray(velocities, dtype=complex))
    noise: list = []

    def G(s):
        vel = np.asarray(s, dtype=complex) @ V
        m = mesh.moved(vel, 1.0)
        fam = metric_family(m, V, h_s=h_s, second="full", tol=tol, threads=threads)
        fc = FamilyCalculus(fam)
        gram = wp_gram_family(fc)
        noise.append(float(np.max(gram_sampling_noise(fc))))
        return gram.G

    return G, noise


def gram_sampling_noise(fc: FamilyCalculus) -> np.ndarray:
    """Per-entry error of ``G^WP`` propagated from the Richardson estimates of the metric family."""
    fam = fc.family
    mesh = fc.mesh
    om = _omega_nodes(mesh, fc.target)
    h = fc.target.h(mesh.node_frame_coord).real
    r = fc.r
    out = np.zeros((r, r))
    da = [np.abs(fc.calc.fit(np.nan_to_num(fam.d1_noise[i]), "scalar")["zb"]) / fc.g for i in range(r)]
    for i in range(r):
        ui = np.abs(fc.harmonic_rep(i).values)
        for j in range(r):
            uj = np.abs(fc.harmonic_rep(j).values)
            n0 = float(np.sum(np.abs(np.nan_to_num(fam.dmix_noise[i, j])) * om))
            n1 = float(np.sum(fam.metric.mass * h * np.abs(mesh.zeta) * (ui * da[j] + uj * da[i])))
            out[i, j] = n0 + n1
    return out


def kahler_symmetry_check(mesh: CoveringMesh, velocities, i: int = 0, k: int = 1, h_outer: float = 1e-2, h_s: float = 1e-3, threads: int = 1) -> KahlerReport:
    """Finite-difference Kaehler symmetry of the branch-move Gram matrix."""
    r = len(np.atleast_2d(velocities))
    G, noise = family_gram_function(mesh, velocities, h_s=h_s, threads=threads)
    rep = kahler_residual(G, r, i, k, h_s=h_outer)
    g_noise = max(noise) if noise else 0.0
    floor = rep.noise_floor + 2 * 2 * g_noise / (h_outer / 2)
    rep.detail["g_noise"] = g_noise
    return KahlerReport(rep.residual, floor, rep.dG, rep.detail)


@dataclass
class IntegrandIdentity:
    lhs: complex
    rhs: complex
    lemma_form: complex

    @property
    def rel_gap(self) -> float:
        return abs(self.lhs - self.rhs) / max(abs(self.lhs), abs(self.rhs), 1e-300)


def integrand_identity(fc: FamilyCalculus, i: int, j: int, k: int) -> IntegrandIdentity:
    """``int phi_{i jbar} L_k(beta^* omega)`` against ``int u_k conj(D_ibar u_j) h g dA``.

    ``L_k(beta^* omega) = (nabla_z u_k) zetabar h dA``; ``D_ibar u_j = zeta (d_ibar a_j + abar_i A_j)``.
    ``lemma_form`` is the integrated-by-parts left side ``-int h u_k zetabar d_z phi dA``.
    """
    from .family import nabla_z

    mesh = fc.mesh
    dA = 2 * mesh.node_lumped_area()
    h = fc.target.h(mesh.node_frame_coord).real
    uk = fc.harmonic_rep(k)
    phi = fc.phi(i, j).values
    zb = np.conj(mesh.zeta)
    lhs = complex(np.sum(phi * nabla_z(uk, fc.calc, fc.target) * zb * h * dA))
    Dj = mesh.zeta * (fc.dlbar_lift(j, i) + np.conj(fc.horizontal_lift(i).a) * fc.beltrami(j).A)
    rhs = complex(np.sum(fc.family.metric.mass * uk.values * np.conj(Dj) * h))
    dphi = fc.calc.fit(phi, "scalar")["z"]
    lemma = complex(-np.sum(h * uk.values * zb * dphi * dA))
    return IntegrandIdentity(lhs, rhs, lemma)
