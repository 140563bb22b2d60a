"""Curvature of the Weil-Petersson metric on fixed-surface families and of the bundle of holomorphic sections.

Three routes are provided:

* :func:`curvature_fixed_x` evaluates, for a family that moves the map but
  not the curve, ``R_{i jbar k lbar} = -<G psi_ik, psi_jl> + eps int (xi_i . xi_j)(xi_k . xi_l) g dA``
  with ``psi_ik = xi_i xi_k zetabar h`` and the Green operator of
  :class:`hurwitzwp.operators.OperatorContext`;
* :func:`curvature_full` evaluates the three-summand formula for the bundle
  of holomorphic sections in a frame normalized to ``G = id``, ``dG = 0``;
* :func:`fd_curvature_oracle` differentiates sampled Gram matrices,
  ``R = -d_k d_lbar G + dG G^{-1} dbar G``.

The target curvature ``K = eps h`` enters every integrand through ``eps``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .covering import ConfigError, TargetMetric
from .mesh import CHART_T, FRAME_WP, QUAD_BARY, CoveringMesh
from .operators import OperatorContext


# -- fixed-X families ---------------------------------------------------------

def _q_matrix(q) -> np.ndarray:
    """Generator of the flow of ``(c0 + c1 w + c2 w^2) d/dw`` acting on ``(w, 1)``."""
    c0, c1, c2 = np.asarray(q, dtype=complex)
    return np.array([[c1, c0], [-c2, 0]], dtype=complex)


class MobiusFamily:
    """Compositions ``beta_s = Phi_s o beta`` with ``Phi_s = [I + sum_k s_k E_k]`` acting on ``P^1``.

    Each direction ``k`` is given by a quadratic vector field ``q_k`` (its
    generator ``E_k``); the tangent field at ``s = 0`` is ``u_k = q_k(beta)``.
    The curve and its hyperbolic metric do not depend on ``s``.
    """

    def __init__(self, qs):
        qs = np.atleast_2d(np.asarray(qs, dtype=complex))
        if qs.shape[1] != 3:
            raise ConfigError("fixed-X directions need q = [c0, c1, c2]")
        self.q = qs
        self.E = np.stack([_q_matrix(q) for q in qs])

    @classmethod
    def standard(cls) -> "MobiusFamily":
        """``q = 1, w, w^2``: ``Phi_s(w) = (w + s_1 + s_2 w) / (1 - s_3 w)``."""
        return cls(np.eye(3))

    @property
    def r(self) -> int:
        return len(self.q)

    def matrix(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        return np.eye(2) + np.tensordot(s, self.E, axes=1)

    @staticmethod
    def _homogeneous(x: np.ndarray, frame: np.ndarray):
        """``(A, B)`` with ``w = A / B``, from a frame coordinate (``w`` or ``w' = 1/w``)."""
        wp = frame == FRAME_WP
        A = np.where(wp, 1.0, x)
        B = np.where(wp, x, 1.0)
        return A, B

    def fields(self, x: np.ndarray, frame: np.ndarray) -> dict:
        """Tangent data at ``s = 0`` in the given frame.

        Returns ``u`` (``r, ...``): ``d_k Phi`` and ``ddu`` (``r, r, ...``):
        ``d_k d_i Phi``, both as components in ``frame``.
        """
        A, B = self._homogeneous(x, frame)
        wp = frame == FRAME_WP
        # numerator/denominator of the frame coordinate: w = A/B or w' = B/A
        P = np.where(wp, B, A)
        Q = np.where(wp, A, B)
        dA = np.einsum("kab,b...->ka...", self.E, np.stack([A, B]))
        dP = np.where(wp, dA[:, 1], dA[:, 0])
        dQ = np.where(wp, dA[:, 0], dA[:, 1])
        u = (dP * Q - P * dQ) / Q**2
        # P, Q are linear in s, so d_k d_i (P/Q) = -(dP_i dQ_k + dP_k dQ_i)/Q^2 + 2 P dQ_i dQ_k / Q^3
        ddu = (
            -(dP[:, None] * dQ[None, :] + dP[None, :] * dQ[:, None]) / Q**2
            + 2 * P * dQ[:, None] * dQ[None, :] / Q**3
        )
        return {"u": u, "ddu": ddu}

    def pair_density(self, s, x: np.ndarray, frame: np.ndarray) -> np.ndarray:
        """``u_i(s) ubar_j(s) h(beta_s)`` (``r, r, ...``), chart-free via homogeneous coordinates."""
        A, B = self._homogeneous(x, frame)
        M = self.matrix(s)
        a = M[0, 0] * A + M[0, 1] * B
        b = M[1, 0] * A + M[1, 1] * B
        da = np.einsum("kab,b...->ka...", self.E, np.stack([A, B]))
        # tangent vector of [a : b] in the form b da - a db, scaled with the homogeneous weight
        wv = b * da[:, 0] - a * da[:, 1]
        den = (np.abs(a) ** 2 + np.abs(b) ** 2) ** 2
        return 2 * wv[:, None] * np.conj(wv[None, :]) / den


@dataclass
class FiberQuadrature:
    """7-point triangle quadrature of one fiber: frame coordinates, ``zeta``, ``h`` and ``g dA`` weights."""

    x: np.ndarray
    frame: np.ndarray
    zeta: np.ndarray
    h: np.ndarray
    gdA: np.ndarray
    dA: np.ndarray
    gamma: np.ndarray

    @classmethod
    def from_context(cls, ctx: OperatorContext) -> "FiberQuadrature":
        mesh = ctx.mesh
        x = ctx.quad_frame_coord()
        frame = np.broadcast_to(mesh.tri_frame[:, None], x.shape)
        zeta = np.ones(x.shape, dtype=complex)
        tch = mesh.tri_chart >= CHART_T
        zeta[tch] = 2 * mesh.quad_points[tch]
        dA = 2 * mesh.quad_weights
        g = ctx.metric.g_quad()
        return cls(x=x, frame=frame, zeta=zeta, h=ctx.h_quad, gdA=g * dA, dA=dA, gamma=ctx.target.gamma(x))

    def p0(self, f: np.ndarray) -> np.ndarray:
        """``M1``-orthogonal projection of quadrature values of a ``(0,1)``-form onto P0."""
        wh = self.dA * self.h
        return np.sum(wh * f, axis=-1) / np.sum(wh, axis=-1)


# -- tensors -------------------------------------------------------------------

@dataclass
class CurvatureTensor:
    """``R[i, j, k, l] = R_{i jbar k lbar}`` plus named summands."""

    R: np.ndarray
    parts: dict = field(default_factory=dict)
    frame: str = "coordinate"
    frame_matrix: np.ndarray | None = None

    def hermitian_defect(self) -> float:
        Rc = np.conj(np.transpose(self.R, (1, 0, 3, 2)))
        return float(np.max(np.abs(self.R - Rc)) / max(np.max(np.abs(self.R)), 1e-300))

    def ik_symmetry_defect(self) -> float:
        Rs = np.transpose(self.R, (2, 1, 0, 3))
        return float(np.max(np.abs(self.R - Rs)) / max(np.max(np.abs(self.R)), 1e-300))

    def in_frame(self, C: np.ndarray, indices: str = "ijkl") -> "CurvatureTensor":
        """Contract with ``C`` (new basis ``e'_a = sum_i C[i, a] e_i``) on the listed slots."""
        R = self.R
        Cc = np.conj(C)
        if "i" in indices:
            R = np.einsum("ia,ijkl->ajkl", C, R)
        if "j" in indices:
            R = np.einsum("jb,ajkl->abkl", Cc, R)
        if "k" in indices:
            R = np.einsum("kc,abkl->abcl", C, R)
        if "l" in indices:
            R = np.einsum("ld,abcl->abcd", Cc, R)
        parts = {}
        for name, P in self.parts.items():
            parts[name] = CurvatureTensor(P).in_frame(C, indices).R
        return CurvatureTensor(R, parts, frame="orthonormal", frame_matrix=C)


def relative_frobenius(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def orthonormal_frame(G: np.ndarray) -> np.ndarray:
    """``C0`` with ``C0^T G conj(C0) = id`` for ``G[i, j] = G_{i jbar}`` (Cholesky)."""
    L = np.linalg.cholesky(G)
    return np.linalg.inv(L).T


# -- fixed-X curvature -----------------------------------------------------------

def fixed_x_gram(fam: MobiusFamily, quad: FiberQuadrature, s=None) -> np.ndarray:
    """``G_{i jbar}(s) = int u_i ubar_j h(beta_s) g dA``."""
    s = np.zeros(fam.r) if s is None else s
    return np.sum(fam.pair_density(s, quad.x, quad.frame) * quad.gdA, axis=(-2, -1))


def fixed_x_dgram(fam: MobiusFamily, quad: FiberQuadrature) -> np.ndarray:
    """``d_k G_{i jbar}(0) = int (nabla_k u_i) ubar_j h g dA``, indexed ``[k, i, j]``."""
    f = fam.fields(quad.x, quad.frame)
    u, ddu = f["u"], f["ddu"]
    nab = ddu + quad.gamma * u[:, None] * u[None, :]
    return np.einsum("kitq,jtq->kij", nab * quad.h * quad.gdA, np.conj(u))


def curvature_fixed_x(fam: MobiusFamily, ctx: OperatorContext, quad: FiberQuadrature | None = None) -> CurvatureTensor:
    """Fixed-surface curvature ``-<G psi_ik, psi_jl> + eps int (xi_i . xi_j)(xi_k . xi_l) g dA``.

    Returned in the coordinate frame of ``fam``; use :meth:`CurvatureTensor.in_frame`
    with :func:`orthonormal_frame` for the normalized frame.
    """
    quad = quad if quad is not None else FiberQuadrature.from_context(ctx)
    eps = ctx.target.epsilon
    xi = fam.fields(quad.x, quad.frame)["u"]
    r = fam.r
    V = {}
    for i in range(r):
        for k in range(i, r):
            psi = quad.p0(xi[i] * xi[k] * np.conj(quad.zeta) * quad.h)
            V[i, k] = V[k, i] = ctx.dbar_inverse(psi)
    first = np.zeros((r,) * 4, dtype=complex)
    for i, j, k, l in product(range(r), repeat=4):
        first[i, j, k, l] = -(eps**2) * ctx.inner0(V[i, k], V[j, l])
    dots = xi[:, None] * np.conj(xi[None, :]) * quad.h  # (r, r, T, 7)
    second = eps * np.einsum("ijtq,kltq->ijkl", dots * quad.gdA, dots)
    return CurvatureTensor(first + second, {"green": first, "quartic": second})


# -- finite-difference oracle -----------------------------------------------------

@dataclass
class FDCurvature:
    R: np.ndarray
    dG: np.ndarray
    G: np.ndarray
    error: float
    dG_error: float


def _fd_pass(Gfun, s0: np.ndarray, r: int, h: float):
    e = np.eye(r)
    G0 = Gfun(s0)
    cache = {}

    def at(d):
        key = tuple(np.round(d / h, 6))
        if key not in cache:
            cache[key] = Gfun(s0 + d)
        return cache[key]

    dG = np.empty((r,) + G0.shape, dtype=complex)
    ddG = np.empty((r, r) + G0.shape, dtype=complex)
    for k in range(r):
        gx = (at(h * e[k]) - at(-h * e[k])) / (2 * h)
        gy = (at(1j * h * e[k]) - at(-1j * h * e[k])) / (2 * h)
        dG[k] = 0.5 * (gx - 1j * gy)
    for k in range(r):
        for l in range(r):
            if k == l:
                lap = (at(h * e[k]) + at(-h * e[k]) + at(1j * h * e[k]) + at(-1j * h * e[k]) - 4 * G0) / h**2
                ddG[k, l] = 0.25 * lap
                continue
            def mixed(a, b):
                return (at(h * (a + b)) - at(h * (a - b)) - at(h * (b - a)) + at(-h * (a + b))) / (4 * h * h)
            xx = mixed(e[k], e[l])
            yy = mixed(1j * e[k], 1j * e[l])
            xy = mixed(e[k], 1j * e[l])
            yx = mixed(1j * e[k], e[l])
            ddG[k, l] = 0.25 * (xx + yy + 1j * (xy - yx))
    return G0, dG, ddG


def _chern(G0, dG, ddG):
    Ginv = np.linalg.inv(G0)
    # R_{i jbar k lbar} = -d_k d_lbar G_{i jbar} + (d_k G) G^{-1} (d_lbar G)
    dGbar = np.conj(np.transpose(dG, (0, 2, 1)))  # d_lbar G_{i jbar} = conj(d_l G_{j ibar})
    quad = np.einsum("kip,pq,lqj->ijkl", dG, Ginv, dGbar)
    return -np.transpose(ddG, (2, 3, 0, 1)) + quad


def fd_curvature_oracle(Gfun, r: int, s0=None, h_s: float = 1e-3, richardson: bool = True) -> FDCurvature:
    """Chern curvature of sampled hermitian matrices ``Gfun(s)`` by centered differences.

    With ``richardson`` the second-order results at ``h_s`` and ``h_s / 2`` are
    extrapolated and ``error`` is the size of the correction relative to ``|R|``.
    """
    s0 = np.zeros(r, dtype=complex) if s0 is None else np.asarray(s0, dtype=complex)
    G0, d1, dd1 = _fd_pass(Gfun, s0, r, h_s)
    R1 = _chern(G0, d1, dd1)
    if not richardson:
        return FDCurvature(R1, d1, G0, float("nan"), float("nan"))
    _, d2, dd2 = _fd_pass(Gfun, s0, r, h_s / 2)
    R2 = _chern(G0, d2, dd2)
    R = (4 * R2 - R1) / 3
    dG = (4 * d2 - d1) / 3
    err = float(np.max(np.abs(R2 - R1)) / 3 / max(np.max(np.abs(R)), 1e-300))
    derr = float(np.max(np.abs(d2 - d1)) / 3)
    return FDCurvature(R, dG, G0, err, derr)


# -- bundle curvature in a normalized frame ---------------------------------------

@dataclass
class DirectionData:
    """Fields of one base direction at the nodes: ``u_k`` (node frame), ``a_k``, ``zeta A_k``."""

    u: np.ndarray
    a: np.ndarray
    zeta_A: np.ndarray


@dataclass
class FullCurvature:
    tensor: CurvatureTensor
    frame0: np.ndarray
    frame1: np.ndarray
    dG: np.ndarray
    stokes: np.ndarray | None
    four_terms: dict


def _q_fields(x: np.ndarray, frame: np.ndarray, qs: np.ndarray, target: TargetMetric):
    """Pullbacks ``q_i(beta)`` and ``(nabla_w q_i)(beta)`` at frame coordinates ``x``."""
    wp = frame == FRAME_WP
    gam = target.gamma(x)
    vals, nabla = [], []
    for c0, c1, c2 in np.asarray(qs, dtype=complex):
        # in the w' frame the field is -(c0 w'^2 + c1 w' + c2)
        v = np.where(wp, -(c0 * x * x + c1 * x + c2), c0 + c1 * x + c2 * x * x)
        dv = np.where(wp, -(2 * c0 * x + c1), c1 + 2 * c2 * x)
        vals.append(v)
        nabla.append(dv + gam * v)
    return np.array(vals), np.array(nabla)


def _q_nodes(mesh: CoveringMesh, qs: np.ndarray, target: TargetMetric):
    return _q_fields(mesh.node_frame_coord, mesh.node_frame, qs, target)


def _to_tri_01(mesh: CoveringMesh, vals: np.ndarray) -> np.ndarray:
    """P0 coefficient (triangle chart and frame) of a ``beta^* T``-valued ``(0,1)``-form given per node."""
    jac = mesh.tri_jacobian  # dz_owner / dz_tri
    corner = np.asarray(vals)[mesh.tris] * np.conj(jac) * mesh.tri_frame_factor
    return corner.mean(axis=1)


def curvature_full(
    ctx: OperatorContext,
    qs,
    directions: list[DirectionData],
    phi: np.ndarray | None = None,
    rule: str = "quad",
) -> FullCurvature:
    """Curvature of the bundle of holomorphic sections in a normalized holomorphic frame.

    ``qs`` gives the frame ``u_i = q_i(beta)``; ``directions`` the base
    directions ``k`` with harmonic representatives ``u_k``, lifts ``a_k`` and
    ``zeta A_k``.  ``phi[k, l]`` holds node values of ``phi_{k lbar}`` (omit
    for fixed-surface input).  The ``box phi`` summand uses the finite-element
    weak form ``F^T (S / 2) phi``; nodal second-derivative fits of ``phi``
    amplify its discretization error too much to be useful here.  ``stokes``
    is the same summand with ``box`` moved onto ``F = u ubar h`` analytically.

    Uses ``D_k u_i = (nabla_w q_i)(beta) u_k`` and ``u_{i;z} = zeta nabla_w q_i``.
    The frame is ``u~_a(s) = sum_i u_i (C0 + sum_k s_k C1_k)[i, a]`` with
    ``C0^T G conj(C0) = id`` and ``C1_k = -G^{-T} (d_k G)^T C0``.
    """
    mesh = ctx.mesh
    eps = ctx.target.epsilon
    m0 = ctx.m0
    h = ctx.h_node
    U, NQ = _q_nodes(mesh, qs, ctx.target)
    Xk = np.array([d.u for d in directions])
    r, b = len(U), len(directions)
    if rule == "lumped":
        wq, hq, Uq, NQq, Xq = m0, h, U, NQ, Xk
        gw = ctx.mass_g
    elif rule == "quad":
        quad = FiberQuadrature.from_context(ctx)
        Uq, NQq = _q_fields(quad.x, quad.frame, qs, ctx.target)
        Xq = np.array([mesh.section_to_tri(x) @ QUAD_BARY.T for x in Xk])
        hq = quad.h
        gw = quad.gdA
        wq = hq * gw
    else:
        raise ValueError(f"unknown rule {rule!r}")
    ax = tuple(range(1, np.ndim(Uq)))

    def integrate(f):
        return np.sum(f, axis=tuple(range(f.ndim - len(ax), f.ndim)))

    G = integrate(Uq[:, None] * np.conj(Uq[None, :]) * wq)
    DU = NQq[None, :] * Xq[:, None]  # [k, i, ...]: D_k u_i
    dG = integrate(DU[:, :, None] * np.conj(Uq[None, None, :]) * wq)
    C0 = orthonormal_frame(G)
    Ginv_T = np.linalg.inv(G).T
    C1 = np.array([-Ginv_T @ dG[k].T @ C0 for k in range(b)])
    Ut_q = np.tensordot(C0.T, Uq, axes=1)
    DUt = np.moveaxis(np.tensordot(DU, C0, axes=([1], [0])), -1, 1) + np.tensordot(C1, Uq, axes=([1], [0]))
    t1 = -np.transpose(integrate(DUt[:, :, None, None] * np.conj(DUt[None, None]) * wq), (1, 3, 0, 2))
    pq = Ut_q[:, None] * np.conj(Ut_q[None, :]) * hq
    XX = Xq[:, None] * np.conj(Xq[None, :]) * hq
    t2 = eps * integrate(pq[:, :, None, None] * XX[None, None] * gw)
    Ut = np.einsum("ia,in->an", C0, U)
    pair = Ut[:, None] * np.conj(Ut[None, :]) * h  # [a, b, n]
    t3 = np.zeros_like(t1)
    stokes = None
    if phi is not None:
        t3 = np.einsum("abn,kln->abkl", pair, np.stack([[ctx.box_matrix @ phi[k, l] for l in range(b)] for k in range(b)]))
        # eps int phi u ubar h beta^*omega - int phi (u_{;z}/zeta)(ubar_{;zbar}/zetabar) beta^*omega,
        # seven-point rule with analytic sections and the P1 interpolant of phi
        quad = FiberQuadrature.from_context(ctx)
        Uq, NQq = _q_fields(quad.x, quad.frame, qs, ctx.target)
        Uq = np.einsum("ia,itq->atq", C0, Uq)
        NQq = np.einsum("ia,itq->atq", C0, NQq)
        bw = quad.h * np.abs(quad.zeta) ** 2 * quad.dA
        inner = eps * Uq[:, None] * np.conj(Uq[None, :]) * quad.h - NQq[:, None] * np.conj(NQq[None, :])
        phi_q = np.asarray(phi)[:, :, mesh.tris] @ QUAD_BARY.T
        stokes = np.einsum("abtq,kltq->abkl", inner * bw, phi_q)
    # four-term split of t1 through dbar D_k u~_a = -eps h zetabar X_k u~_a + (zeta A_k) nabla q~_a
    NQt = np.einsum("ia,in->an", C0, NQ)
    zeta_bar = np.conj(mesh.zeta)
    alpha1 = {(a, k): _to_tri_01(mesh, h * zeta_bar * Xk[k] * Ut[a]) for a in range(r) for k in range(b)}
    alpha2 = {(a, k): _to_tri_01(mesh, directions[k].zeta_A * NQt[a]) for a in range(r) for k in range(b)}
    V1 = {key: ctx.dbar_inverse(v) for key, v in alpha1.items()}
    V2 = {key: ctx.dbar_inverse(v) for key, v in alpha2.items()}
    four = {name: np.zeros((r, r, b, b), dtype=complex) for name in ("KK", "AK", "KA", "AA")}
    for a, bb, k, l in product(range(r), range(r), range(b), range(b)):
        four["KK"][a, bb, k, l] = -(eps**2) * ctx.inner0(V1[a, k], V1[bb, l])
        four["AK"][a, bb, k, l] = eps * ctx.inner0(V2[a, k], V1[bb, l])
        four["KA"][a, bb, k, l] = eps * ctx.inner0(V1[a, k], V2[bb, l])
        four["AA"][a, bb, k, l] = -ctx.inner0(V2[a, k], V2[bb, l])
    tensor = CurvatureTensor(t1 + t2 + t3, {"first": t1, "second": t2, "box_phi": t3}, frame="normalized (i, j); coordinate (k, l)")
    return FullCurvature(tensor=tensor, frame0=C0, frame1=C1, dG=dG, stokes=stokes, four_terms=four)


def fixed_x_directions(fam: MobiusFamily, mesh: CoveringMesh) -> list[DirectionData]:
    """Direction data of a fixed-surface family: ``u_k = q_k(beta)``, ``a = 0``, ``A = 0``."""
    from .covering import pullback_values

    zero = np.zeros(mesh.n_nodes, dtype=complex)
    return [DirectionData(u=pullback_values(mesh, q), a=zero, zeta_A=zero) for q in fam.q]


def family_directions(fc) -> list[DirectionData]:
    """Direction data of branch moves from a :class:`hurwitzwp.family.FamilyCalculus`."""
    out = []
    for k in range(fc.r):
        rep = fc.harmonic_rep(k)
        out.append(DirectionData(u=rep.values, a=rep.a, zeta_A=fc.mesh.zeta * fc.beltrami(k).A))
    return out


def family_phi(fc) -> np.ndarray:
    """Node values of ``phi_{k lbar}`` for all direction pairs."""
    return np.array([[fc.phi(k, l).values for l in range(fc.r)] for k in range(fc.r)])
