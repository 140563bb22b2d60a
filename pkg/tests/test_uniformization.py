"""Liouville solver and branch-move metric families."""
import numpy as np
import pytest

from hurwitzwp.covering import BranchConfiguration
from hurwitzwp.mesh import build_mesh
from hurwitzwp.uniformization import (
    SolverError, metric_family, solve_liouville, stiffness_matrix,
)

from conftest import one_point


def test_stiffness_symmetric_with_constant_kernel(solved8):
    mesh, _ = solved8
    S = stiffness_matrix(mesh)
    assert abs(S - S.T).max() < 1e-12
    assert np.max(np.abs(S @ np.ones(mesh.n_nodes))) < 1e-10


def test_area_matches_gauss_bonnet(solved12):
    _, metric = solved12
    assert metric.gauss_bonnet_target == pytest.approx(4 * np.pi)
    assert metric.area_rel_error < 0.01
    # a discrete solution reproduces the curvature integral exactly
    assert metric.area == pytest.approx(metric.curvature_integral, rel=1e-8)


def test_newton_converges_to_requested_tolerance(solved8):
    _, metric = solved8
    assert metric.residual < 1e-9
    assert metric.history[0] > metric.residual


def test_solution_is_rotation_invariant(solved8):
    from helpers import rotation_map

    mesh, metric = solved8
    dist, idx = rotation_map(mesh)
    ok = dist < 1e-9
    assert ok.mean() > 0.95
    assert np.max(np.abs(metric.u[idx[ok]] - metric.u[ok])) < 1e-6


def test_genus_three_area():
    cfg = BranchConfiguration.roots_of_unity(genus=3)
    metric = solve_liouville(build_mesh(cfg, 8))
    assert metric.gauss_bonnet_target == pytest.approx(8 * np.pi)
    assert metric.area_rel_error < 0.02


def test_newton_reports_non_convergence(solved8):
    mesh, _ = solved8
    with pytest.raises(SolverError):
        solve_liouville(mesh, max_iter=1, tol=1e-14, target_tol=1e-15)


def test_metric_family_rejects_bad_input(solved8):
    mesh, metric = solved8
    with pytest.raises(ValueError, match="second-derivative"):
        metric_family(mesh, [one_point(6, 0)], second="bogus", metric=metric)
    with pytest.raises(ValueError, match="velocities"):
        metric_family(mesh, [np.ones(4)], metric=metric)


def test_family_noise_and_hermitian_symmetry(moves12):
    fam = moves12.family
    assert 0 < fam.noise_floor("d1") < 1e-5
    assert 0 < fam.noise_floor("dmix") < 1e-4
    # d_i d_jbar log g is a Hermitian matrix up to the finite-difference noise
    assert fam.hermitian_defect() < 10 * fam.noise_floor("dmix")


def test_family_area_is_constant(moves12):
    fam = moves12.family
    # Gauss-Bonnet fixes the area along any family
    areas = np.array(fam.stencil_areas)
    assert np.max(np.abs(areas - areas.mean())) < 1e-3 * areas.mean()
