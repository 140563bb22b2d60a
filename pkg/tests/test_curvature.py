"""Curvature of the bundle of holomorphic sections over fixed-surface and branch-move families."""
import numpy as np
import pytest

from hurwitzwp.curvature import (
    CurvatureTensor, FiberQuadrature, MobiusFamily, curvature_fixed_x, curvature_full,
    fd_curvature_oracle, fixed_x_dgram, fixed_x_directions, fixed_x_gram, orthonormal_frame,
    relative_frobenius,
)


def _synthetic(r=2, n=3, seed=3):
    """``G(s) = B(s) B(s)^H + N(s) N(s)^H`` with ``B`` holomorphic and ``N(0) = 0``.

    The ``B`` part is a flat bundle in a holomorphic frame, so only ``N``
    contributes: ``R_{i jbar k lbar} = -(M_k M_l^H)_{ij}``.
    """
    rng = np.random.default_rng(seed)
    cplx = lambda *shape: rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    B0, Bk, Mk = cplx(n, n) + 3 * np.eye(n), cplx(r, n, n), cplx(r, n, n)

    def G(s):
        B = B0 + np.tensordot(s, Bk, axes=1)
        N = np.tensordot(s, Mk, axes=1)
        return B @ B.conj().T + N @ N.conj().T

    exact = -np.einsum("kia,lja->ijkl", Mk, np.conj(Mk))
    return G, exact


def test_fd_oracle_on_synthetic_bundle():
    G, exact = _synthetic()
    o = fd_curvature_oracle(G, 2)
    assert relative_frobenius(o.R, exact) < 1e-7
    assert o.error < 1e-6


def test_fd_oracle_flat_bundle_has_zero_curvature():
    rng = np.random.default_rng(0)
    B0 = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
    Bk = rng.standard_normal((2, 3, 3)) + 1j * rng.standard_normal((2, 3, 3))

    def G(s):
        B = B0 + np.tensordot(s, Bk, axes=1)
        return B @ B.conj().T

    o = fd_curvature_oracle(G, 2)
    assert np.max(np.abs(o.R)) < 1e-7
    const = fd_curvature_oracle(lambda s: np.diag([1.0, 2.0]), 1)
    assert np.max(np.abs(const.R)) == 0


def test_orthonormal_frame():
    G, _ = _synthetic()
    G0 = G(np.zeros(2))
    C = orthonormal_frame(G0)
    assert np.allclose(C.T @ G0 @ np.conj(C), np.eye(3))


def test_in_frame_is_a_change_of_basis():
    G, exact = _synthetic()
    C = orthonormal_frame(G(np.zeros(2)))
    Ct = np.linalg.inv(C)
    R = CurvatureTensor(exact, {"x": exact})
    back = R.in_frame(C, "ij").in_frame(Ct, "ij")
    assert np.allclose(back.R, exact)
    assert np.allclose(back.parts["x"], exact)


@pytest.fixture(scope="module")
def fixed12(ctx12):
    fam = MobiusFamily.standard()
    quad = FiberQuadrature.from_context(ctx12)
    return fam, quad, curvature_fixed_x(fam, ctx12, quad)


def test_mobius_family_at_zero_is_the_pullback_basis(fixed12, ctx12):
    fam, quad, _ = fixed12
    assert np.allclose(fam.matrix(np.zeros(3)), np.eye(2))
    G = fixed_x_gram(fam, quad)
    assert np.max(np.abs(G - G.conj().T)) < 1e-12 * np.max(np.abs(G))
    assert np.all(np.linalg.eigvalsh(G) > 0)


def test_dgram_lemma_against_finite_differences(fixed12):
    fam, quad, _ = fixed12
    o = fd_curvature_oracle(lambda s: fixed_x_gram(fam, quad, s), fam.r)
    dG = fixed_x_dgram(fam, quad)
    assert np.max(np.abs(dG - o.dG)) < 1e-8 * np.max(np.abs(dG))


def test_fixed_x_tensor_symmetries(fixed12):
    _, _, R = fixed12
    assert R.hermitian_defect() < 1e-10
    # psi_ik is symmetric in i, k and the quartic term is too
    assert R.ik_symmetry_defect() < 1e-10


def test_summand_signs(fixed12):
    _, _, R = fixed12
    r = R.R.shape[0]
    for i in range(r):
        for k in range(r):
            assert R.parts["green"][i, i, k, k].real <= 0
            assert R.parts["quartic"][i, i, k, k].real > 0


def test_fixed_x_tensor_against_fd_oracle(fixed12):
    fam, quad, R = fixed12
    o = fd_curvature_oracle(lambda s: fixed_x_gram(fam, quad, s), fam.r)
    C0 = orthonormal_frame(o.G)
    err = relative_frobenius(R.in_frame(C0).R, CurvatureTensor(o.R).in_frame(C0).R)
    # the green term carries the discretization error of the dbar solve
    assert err < 0.03


def test_full_formula_reduces_on_fixed_x_input(fixed12, ctx12):
    fam, quad, R = fixed12
    full = curvature_full(ctx12, fam.q, fixed_x_directions(fam, ctx12.mesh))
    C0 = orthonormal_frame(fixed_x_gram(fam, quad))
    assert relative_frobenius(full.tensor.in_frame(C0, "kl").R, R.in_frame(C0).R) < 0.03
    # without a Beltrami field only the KK term of the four-term split survives
    assert np.max(np.abs(full.four_terms["AA"])) == 0
    assert np.max(np.abs(full.four_terms["AK"])) == 0
    first = full.tensor.parts["first"]
    assert relative_frobenius(full.four_terms["KK"], first) < 0.04
    assert full.stokes is None


def test_full_formula_rule_validation(fixed12, ctx12):
    fam, _, _ = fixed12
    with pytest.raises(ValueError, match="rule"):
        curvature_full(ctx12, fam.q, fixed_x_directions(fam, ctx12.mesh), rule="simpson")
