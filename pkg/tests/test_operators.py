"""The dbar complex, its Green operator and the scalar Laplacian on a fiber."""
import numpy as np
import pytest

from hurwitzwp.covering import BranchConfiguration, pullback_values
from hurwitzwp.mesh import build_mesh
from hurwitzwp.operators import OperatorContext, OperatorError
from hurwitzwp.uniformization import solve_liouville


@pytest.fixture(scope="module")
def rng():
    return np.random.default_rng(7)


def _random_section(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def test_pullback_sections_are_the_kernel(ctx12, rng):
    mesh = ctx12.mesh
    for q in np.eye(3):
        u = pullback_values(mesh, q)
        assert np.max(np.abs(ctx12.dbar(u))) < 1e-10
    u = _random_section(rng, mesh.n_nodes)
    assert np.max(np.abs(ctx12.dbar(ctx12.harmonic_part(u)))) < 1e-10


def test_numerical_kernel_has_dimension_three(ctx12):
    rep = ctx12.kernel_report()
    assert rep.dimension == 3
    assert rep.gap > 10
    # the discrete kernel of the plain operator is close to the pullback span
    assert rep.angle_to_pullbacks < 0.05


def test_adjointness(ctx12, rng):
    n, T = ctx12.mesh.n_nodes, ctx12.mesh.n_tris
    for _ in range(5):
        u = _random_section(rng, n)
        alpha = _random_section(rng, T)
        assert ctx12.adjointness_defect(u, alpha) < 1e-10


def test_reconstruction_on_random_fields(ctx12, rng):
    for _ in range(5):
        u = _random_section(rng, ctx12.mesh.n_nodes)
        assert ctx12.reconstruction_residual(u) < 1e-8


def test_green_operator_inverts_laplacian_on_range(ctx12, rng):
    u = _random_section(rng, ctx12.mesh.n_nodes)
    beta = ctx12.dbar(u)
    gb = ctx12.green_01(beta)
    back = ctx12.laplace_01(gb)
    assert np.linalg.norm(back - beta) < 1e-8 * np.linalg.norm(beta)
    # the pairing is Hermitian and positive
    alpha = ctx12.dbar(_random_section(rng, ctx12.mesh.n_nodes))
    p_ab = ctx12.green_01_pairing(alpha, beta)
    p_ba = ctx12.green_01_pairing(beta, alpha)
    assert abs(p_ab - np.conj(p_ba)) < 1e-10 * abs(p_ab)
    assert ctx12.green_01_pairing(beta, beta).real > 0


def test_smallest_01_eigenvalue_positive(ctx12):
    assert ctx12.smallest_01_eigenvalue() > 1e-3


def test_green_not_invertible_when_too_few_branch_points():
    cfg = BranchConfiguration.roots_of_unity(genus=3)
    ctx = OperatorContext(solve_liouville(build_mesh(cfg, 8)))
    with pytest.raises(OperatorError, match="4g - 4"):
        ctx.dbar_inverse(np.zeros(ctx.mesh.n_tris, dtype=complex))


def test_box_has_constants_as_kernel(ctx12):
    one = np.ones(ctx12.mesh.n_nodes)
    assert np.max(np.abs(ctx12.box(one))) < 1e-10
    lam = ctx12.box_spectrum(3)
    assert abs(lam[0]) < 1e-8
    # on a hyperbolic surface of genus 2 the first eigenvalue of -Delta_g is positive;
    # box is a quarter of it in these units
    assert lam[1] > 0.05


def test_green_scalar_plus_one_fixes_constants(ctx12):
    one = np.ones(ctx12.mesh.n_nodes)
    assert np.max(np.abs(ctx12.green_scalar_plus_one(one) - 1)) < 1e-10
    f = np.cos(ctx12.mesh.w.real.clip(-5, 5))
    phi = ctx12.green_scalar_plus_one(f)
    # (box + 1) integrates to the identity against dA_g
    mass = ctx12.mass_g
    assert np.sum(mass * phi) == pytest.approx(np.sum(mass * f), rel=1e-10)
