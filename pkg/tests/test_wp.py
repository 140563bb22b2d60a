"""Weil-Petersson Gram matrices and the Kaehler-symmetry check."""
import numpy as np
import pytest

from hurwitzwp.curvature import FiberQuadrature, MobiusFamily, fixed_x_gram
from hurwitzwp.family import DeformationDirection
from hurwitzwp.operators import OperatorContext
from hurwitzwp.wp import (
    WPError, WPGram, g0_entry, gram_sampling_noise, kahler_residual, wp_gram, wp_gram_family,
    wp_gram_fixed_x,
)


@pytest.fixture(scope="module")
def fixed12(ctx12):
    return wp_gram_fixed_x(MobiusFamily.standard(), ctx12)


def test_fixed_x_gram_structure(fixed12):
    g = fixed12
    assert np.max(np.abs(g.G0)) == 0
    assert g.hermitian_defect() < 1e-12
    # rotation by a sixth root of unity separates 1, w and w^2 into distinct characters
    off = np.abs(g.G1 - np.diag(np.diag(g.G1)))
    assert np.max(off) < 1e-10 * np.max(np.abs(g.G1))
    # w -> 1/w exchanges 1 and w^2; the mesh is not symmetric under it, so
    # the two agree only up to the discretization error
    assert abs(g.G1[0, 0] - g.G1[2, 2]) < g.error[0, 0] + g.error[2, 2]


def test_fixed_x_gram_positive_with_margin(fixed12):
    assert fixed12.positive_definite()
    assert fixed12.min_eig > 10 * fixed12.error_norm
    assert fixed12.null_directions() == []


def test_error_estimate_covers_refinement(ctx12, solved8):
    coarse = wp_gram_fixed_x(MobiusFamily.standard(), OperatorContext(solved8[1]))
    fine = wp_gram_fixed_x(MobiusFamily.standard(), ctx12)
    assert np.all(np.abs(coarse.G - fine.G) <= 2 * coarse.error + 1e-12)
    assert fine.error.max() < coarse.error.max()


def test_trivial_direction_is_null(solved12, ctx12):
    mesh, _ = solved12
    dirs = [DeformationDirection.fixed_x(q) for q in ([1, 0, 0], [0, 0, 0], [0, 1, 0])]
    g = wp_gram(dirs, mesh, ctx=ctx12)
    assert g.null_directions() == [1]
    assert not g.positive_definite()
    assert g.to_dict()["null_directions"] == [1]


def test_mixed_kinds_rejected(solved8):
    mesh, _ = solved8
    dirs = [DeformationDirection.fixed_x([1, 0, 0]), DeformationDirection.branch_move(6, 0)]
    with pytest.raises(ValueError, match="all fixed-x or all branch-move"):
        wp_gram(dirs, mesh)


def test_non_hermitian_gram_raises():
    G = np.array([[1.0, 0.5], [0.0, 1.0]], dtype=complex)
    with pytest.raises(WPError, match="hermitian"):
        WPGram(np.zeros_like(G), G, np.full((2, 2), 1e-6)).check()


def test_g0_of_constant_is_the_target_area(ctx12):
    mesh = ctx12.mesh
    val, err = g0_entry(np.ones(mesh.n_nodes), mesh, ctx=ctx12)
    # beta^* omega integrates to deg(beta) times the area 4 pi of the target
    assert val.real == pytest.approx(8 * np.pi, rel=1e-3)
    assert abs(val.real - 8 * np.pi) < err
    assert np.isnan(g0_entry(np.ones(mesh.n_nodes), mesh)[1])


def test_branch_move_gram(moves12, ctx12):
    g = wp_gram_family(moves12, ctx12).check()
    assert g.positive_definite()
    assert g.min_eig > 5 * g.error_norm
    # the two moves are related by rotation
    assert g.G[0, 0].real == pytest.approx(g.G[1, 1].real, rel=1e-4)
    noise = gram_sampling_noise(moves12)
    assert np.all(noise > 0) and np.max(noise) < 1e-4


def _kahler_metric(s):
    """Hessian of ``|s|^2 + |s_0|^2 |s_1|^2 + |s_0|^4`` (a Kaehler metric)."""
    a, b = s
    return np.array(
        [[1 + abs(b) ** 2 + 4 * abs(a) ** 2, np.conj(a) * b], [a * np.conj(b), 1 + abs(a) ** 2]],
        dtype=complex,
    )


def test_kahler_residual_on_synthetic_metrics():
    s0 = np.array([0.3 + 0.1j, -0.2j])
    rep = kahler_residual(lambda s: _kahler_metric(s + s0), 2, 0, 1)
    assert rep.residual < 1e-10
    assert np.max(np.abs(rep.dG)) > 0.1

    def bad(s):
        G = _kahler_metric(s)
        G[0, 0] += 0.4 * s[1].real
        return G

    rep = kahler_residual(bad, 2, 0, 1)
    assert rep.residual == pytest.approx(0.2, rel=1e-8)
    assert rep.ratio > 1e6


def test_kahler_symmetry_on_mobius_orbit(ctx12):
    fam = MobiusFamily.standard()
    quad = FiberQuadrature.from_context(ctx12)
    for i, k in [(0, 1), (1, 2)]:
        rep = kahler_residual(lambda s: fixed_x_gram(fam, quad, s), 3, i, k)
        assert rep.residual < 1e-9
        assert rep.residual < rep.noise_floor
