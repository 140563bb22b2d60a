"""Discrete ``dbar`` on sections of ``beta^* T``, its adjoint, Laplacians and Green operators.

Sections are P1 node values in the node frame; ``(0,1)``-forms valued in
``beta^* T`` are one coefficient per triangle, in the triangle's chart and
frame.  With the hyperbolic metric ``g`` and the target metric ``h``,

    <u, v>       = int u vbar h g dA    (lumped: diagonal ``M0``),
    <alpha, b>   = int alpha bbar h dA  (``|dzbar|^2 = 1/g`` cancels ``g``; diagonal ``M1``),

and the adjoint is the exact matrix adjoint ``M0^{-1} D^H M1``.

The P1/P0 pair does not reproduce the holomorphic sections exactly, so the
operator ``dbar`` used here is ``D (1 - H)``, where ``H`` is the orthogonal
projection onto the span of the explicit pullbacks of ``1, w, w^2``.  Its
kernel is exactly that span, and the Green operator on ``(0,1)``-forms is
the inverse of ``dbar dbar^*`` on the range of ``dbar``.  The plain ``D``
is kept for the numerical kernel cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .covering import NormalField, TargetMetric, pullback_values
from .mesh import FRAME_WP, CoveringMesh
from .uniformization import HyperbolicMetric, stiffness_matrix


class OperatorError(RuntimeError):
    """An operator precondition failed or a solve broke down."""


@dataclass(frozen=True)
class KernelReport:
    """Smallest generalized eigenvalues of ``D^H M1 D`` against ``M0``."""

    eigenvalues: np.ndarray
    dimension: int
    gap: float
    angle_to_pullbacks: float


class OperatorContext:
    """Assembled operators for one fiber.

    ``target`` fixes ``h``; ``basis`` lists the coefficient vectors ``q`` of
    the holomorphic sections (default: ``1, w, w^2``).
    """

    def __init__(self, metric: HyperbolicMetric, target: TargetMetric | None = None, basis=None):
        self.metric = metric
        self.mesh: CoveringMesh = metric.mesh
        self.target = target if target is not None else TargetMetric(1)
        mesh = self.mesh
        n, T = mesh.n_nodes, mesh.n_tris
        self.h_node = self.target.h(mesh.node_frame_coord).real
        self.m0 = self.h_node * metric.mass
        self.h_quad = self.target.h(self.quad_frame_coord()).real
        self.m1 = np.sum(2 * mesh.quad_weights * self.h_quad, axis=1)
        coef = mesh.dzbar_phi * mesh.tri_frame_factor
        rows = np.repeat(np.arange(T), 3)
        self.D = sp.csr_matrix((coef.ravel(), (rows, mesh.tris.ravel())), shape=(T, n))
        q = np.eye(3) if basis is None else np.asarray(basis, dtype=complex)
        self.basis_q = q
        self.U = np.stack([pullback_values(mesh, c) for c in q], axis=1)
        self.gram = self.U.conj().T @ (self.m0[:, None] * self.U)
        self.gram_cond = float(np.linalg.cond(self.gram))
        if self.gram_cond > 1e10:
            raise OperatorError(f"holomorphic basis Gram matrix is ill-conditioned (cond {self.gram_cond:.3e})")
        self.mass_g = metric.mass

    # -- geometry -------------------------------------------------------------
    def quad_frame_coord(self) -> np.ndarray:
        """Frame coordinate (``w`` or ``w'``) at every quadrature point, ``(T, 7)``."""
        mesh = self.mesh
        wq = mesh.quad_w()
        wf = mesh.tri_frame == FRAME_WP
        out = np.array(wq)
        out[wf] = mesh.quad_points[wf]
        return out

    # -- inner products -------------------------------------------------------
    def inner0(self, u: np.ndarray, v: np.ndarray) -> complex:
        """``int u vbar h g dA`` of two sections."""
        return complex(np.sum(self.m0 * u * np.conj(v)))

    def inner1(self, a: np.ndarray, b: np.ndarray) -> complex:
        """``int a bbar h dA`` of two ``(0,1)``-forms."""
        return complex(np.sum(self.m1 * a * np.conj(b)))

    # -- dbar and its adjoint -------------------------------------------------
    def harmonic_coefficients(self, u: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.gram, self.U.conj().T @ (self.m0 * u))

    def harmonic_part(self, u: np.ndarray) -> np.ndarray:
        return self.U @ self.harmonic_coefficients(u)

    def dbar_raw(self, u: np.ndarray) -> np.ndarray:
        """Plain P1 ``dbar`` per triangle."""
        return self.D @ u

    def dbar(self, u: np.ndarray) -> np.ndarray:
        """``dbar`` with kernel exactly the holomorphic span."""
        return self.D @ (u - self.harmonic_part(u))

    def dbar_star(self, alpha: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`dbar` for the ``M0`` / ``M1`` inner products."""
        v = (self.D.conj().T @ (self.m1 * alpha)) / self.m0
        return v - self.harmonic_part(v)

    # -- Green operator on (0,1)-forms ----------------------------------------
    def _check_invertible(self):
        cfg = self.mesh.config
        if not cfg.b > 4 * cfg.genus - 4:
            raise OperatorError(
                f"dbar dbar^* is not invertible on (0,1)-forms: b = {cfg.b} must exceed 4g - 4 = {4 * cfg.genus - 4}"
            )

    @cached_property
    def _saddle(self):
        """LU of ``[[D^H M1 D, M0 U], [U^H M0, 0]]`` (least squares on the complement of ``H^0``)."""
        self._check_invertible()
        K = (self.D.conj().T @ sp.diags(self.m1) @ self.D).tocsc()
        C = sp.csc_matrix(self.m0[:, None] * self.U)
        S = sp.bmat([[K, C], [C.conj().T, None]], format="csc")
        return spla.splu(S)

    def _lsq(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``D^H M1 D x = rhs`` on the ``M0``-orthogonal complement of ``H^0``."""
        n = self.mesh.n_nodes
        sol = self._saddle.solve(np.r_[rhs, np.zeros(self.U.shape[1])].astype(complex))
        return sol[:n]

    def dbar_inverse(self, alpha: np.ndarray) -> np.ndarray:
        """The section ``v`` orthogonal to ``H^0`` minimizing ``|dbar v - alpha|``, i.e. ``dbar^* G alpha``."""
        return self._lsq(self.D.conj().T @ (self.m1 * alpha))

    def green_01(self, alpha: np.ndarray) -> np.ndarray:
        """``G alpha`` with ``dbar dbar^* G alpha = alpha`` on the range of ``dbar``."""
        v = self.dbar_inverse(alpha)
        y = self._lsq(self.m0 * v)
        return self.D @ y

    def green_01_pairing(self, alpha: np.ndarray, beta: np.ndarray) -> complex:
        """``<G alpha, beta> = <dbar^* G alpha, dbar^* G beta>``."""
        return self.inner0(self.dbar_inverse(alpha), self.dbar_inverse(beta))

    def laplace_01(self, beta: np.ndarray) -> np.ndarray:
        """``dbar dbar^*`` on ``(0,1)``-forms."""
        return self.dbar(self.dbar_star(beta))

    # -- projections and splittings ---------------------------------------------
    def harmonic_projection(self, u: NormalField) -> NormalField:
        return NormalField(self.mesh, self.harmonic_part(u.values), label=f"H({u.label})")

    def split_tangent(self, u: NormalField) -> tuple[NormalField, np.ndarray]:
        """``(H(u), dbar u)``; ``u = H(u) + dbar^* G dbar u``."""
        return self.harmonic_projection(u), self.dbar(u.values)

    def reconstruct(self, holo: NormalField, beltrami: np.ndarray) -> NormalField:
        return NormalField(self.mesh, holo.values + self.dbar_star(self.green_01(beltrami)))

    def reconstruction_residual(self, u: np.ndarray) -> float:
        """Relative ``|u - H u - dbar^* G dbar u|``."""
        r = u - self.harmonic_part(u) - self.dbar_star(self.green_01(self.dbar(u)))
        return float(np.sqrt(self.inner0(r, r).real / self.inner0(u, u).real))

    def adjointness_defect(self, u: np.ndarray, alpha: np.ndarray) -> float:
        lhs = self.inner1(self.dbar(u), alpha)
        rhs = self.inner0(u, self.dbar_star(alpha))
        return abs(lhs - rhs) / max(abs(lhs), 1e-300)

    # -- scalar Laplacian -----------------------------------------------------
    @cached_property
    def box_matrix(self) -> sp.csr_matrix:
        """Weak form of ``box = -g^{-1} d_z d_zbar``: ``<box f, psi>_g = (1/2) int grad f . grad psi dx dy``."""
        return 0.5 * stiffness_matrix(self.mesh)

    def box(self, f: np.ndarray) -> np.ndarray:
        return (self.box_matrix @ f) / self.mass_g

    @cached_property
    def _box_plus_one(self):
        A = (self.box_matrix + sp.diags(self.mass_g)).tocsc()
        return spla.splu(A)

    def green_scalar_plus_one(self, f: np.ndarray) -> np.ndarray:
        """``(box + 1)^{-1} f``."""
        f = np.asarray(f)
        rhs = self.mass_g * f
        if np.iscomplexobj(f):
            phi = self._box_plus_one.solve(rhs.real) + 1j * self._box_plus_one.solve(rhs.imag)
        else:
            phi = self._box_plus_one.solve(rhs)
        res = self.box_matrix @ phi + self.mass_g * phi - rhs
        rel = np.linalg.norm(res) / max(np.linalg.norm(rhs), 1e-300)
        if not rel < 1e-8:
            raise OperatorError(f"(box + 1) solve residual {rel:.3e}")
        return phi

    def box_spectrum(self, k: int = 3) -> np.ndarray:
        """Smallest ``k`` eigenvalues of ``box`` (generalized against the lumped ``g`` mass)."""
        M = sp.diags(self.mass_g).tocsc()
        vals = spla.eigsh(self.box_matrix.tocsc(), k=k, M=M, sigma=-1e-3, which="LM", return_eigenvectors=False)
        return np.sort(vals)

    # -- kernel cross-check and conditioning --------------------------------------
    def kernel_report(self, k: int = 6) -> KernelReport:
        """Numerical kernel of the plain ``D``: small eigenvalues of ``D^H M1 D`` against ``M0``.

        ``dimension`` counts the eigenvalues below the geometric mean of the
        largest gap in the sorted list; ``angle_to_pullbacks`` is the largest
        principal angle between the numerical kernel and the pullback span.
        """
        K = (self.D.conj().T @ sp.diags(self.m1) @ self.D).tocsc()
        M = sp.diags(self.m0).tocsc()
        vals, vecs = spla.eigsh(K, k=k, M=M, sigma=-1e-6, which="LM")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        lv = np.log(np.maximum(vals, 1e-300))
        jumps = np.diff(lv)
        dim = int(np.argmax(jumps)) + 1
        gap = float(vals[dim] / max(vals[dim - 1], 1e-300))
        Q = vecs[:, :dim] * np.sqrt(self.m0)[:, None]
        Q, _ = np.linalg.qr(Q)
        P, _ = np.linalg.qr(self.U * np.sqrt(self.m0)[:, None])
        s = np.linalg.svd(Q.conj().T @ P, compute_uv=False)
        angle = float(np.arccos(np.clip(s.min(), -1, 1))) if dim == P.shape[1] else float("nan")
        return KernelReport(eigenvalues=vals, dimension=dim, gap=gap, angle_to_pullbacks=angle)

    def smallest_01_eigenvalue(self) -> float:
        """Smallest eigenvalue of ``dbar dbar^*`` on the range of ``dbar`` (equal to that of ``dbar^* dbar`` off ``H^0``)."""
        self._check_invertible()
        n = self.mesh.n_nodes
        # largest eigenvalue of the inverse, which maps into the complement of H^0
        op = spla.LinearOperator((n, n), matvec=lambda x: self._lsq(self.m0 * x), dtype=complex)
        x0 = np.ones(n, dtype=complex)
        x0 -= self.harmonic_part(x0)
        val = spla.eigs(op, k=1, which="LM", v0=x0, return_eigenvectors=False)
        return float(1.0 / abs(val[0]))

