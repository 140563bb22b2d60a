"""Deformation directions, horizontal lifts and the potential phi."""
import warnings

import numpy as np
import pytest

from hurwitzwp.calculus import NodalCalculus
from hurwitzwp.covering import ConfigError, NormalField, pullback_values
from hurwitzwp.family import (
    DeformationDirection, FamilyCalculus, covariant_D_fixed_x, tilde_lift,
)
from hurwitzwp.uniformization import metric_family

from conftest import one_point


def test_direction_parsing():
    d = DeformationDirection.from_dict({"kind": "branch-move", "m": 2, "velocity": [0, 1]}, 6)
    assert d.velocities == (0, 0, 1j, 0, 0, 0)
    d = DeformationDirection.from_dict({"kind": "branch-move", "velocities": [1] * 6}, 6)
    assert d.velocities == DeformationDirection.translation(6).velocities
    d = DeformationDirection.from_dict({"kind": "mobius", "q": [[1, 0], 0, [0, 2]]}, 6)
    assert d.q == (1, 0, 2j)
    assert DeformationDirection.from_dict(d.to_dict(), 6) == d


@pytest.mark.parametrize(
    "bad, match",
    [
        ({"kind": "branch-move"}, "'m'"),
        ({"kind": "branch-move", "m": 9}, "out of range"),
        ({"kind": "branch-move", "velocities": [1, 2]}, "'velocities'"),
        ({"kind": "mobius", "q": [1, 2]}, "'q'"),
        ({"kind": "mobius", "q": [1, 2, [3]]}, "'q'"),
        ({"kind": "twist"}, "unknown kind"),
    ],
)
def test_direction_errors_name_the_field(bad, match):
    with pytest.raises(ConfigError, match=match):
        DeformationDirection.from_dict(bad, 6)


def test_tilde_lift_has_a_pole_at_the_moved_ramification_point(solved8):
    mesh, _ = solved8
    b, pole = tilde_lift(DeformationDirection.branch_move(6, 3), mesh)
    assert pole.sum() == 1
    assert mesh.disc[pole][0] == 3
    # a Moebius field is tangent to every fiber coordinate near a branch point only if it fixes it
    b, pole = tilde_lift(DeformationDirection.fixed_x([1, 0, 0]), mesh)
    assert pole.sum() == 6
    assert np.all(np.isfinite(b))


def test_phi_definition_matches_lift_formula(moves12):
    for i in range(2):
        for j in range(2):
            assert moves12.phi(i, j).formula_gap < 1e-12
    p01, p10 = moves12.phi(0, 1).values, moves12.phi(1, 0).values
    assert np.max(np.abs(p01 - np.conj(p10))) < 1e-12


def test_rotation_symmetry_of_the_two_moves(moves12):
    mass = moves12.family.metric.mass
    n0 = np.sum(mass * moves12.phi(0, 0).values).real
    n1 = np.sum(mass * moves12.phi(1, 1).values).real
    assert n0 > 0
    assert n1 == pytest.approx(n0, rel=1e-4)


def test_lie_derivative_identity_is_small(moves12):
    # L_v (g dz dzbar) = 0 for the horizontal lift; the residual is fit error
    res = np.abs(moves12.lie_density_residual(0))
    scale = np.abs(moves12.G(0))
    assert np.median(res) < 0.1 * np.median(scale)


def test_missing_mixed_derivatives_raise(solved8):
    mesh, metric = solved8
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fam = metric_family(mesh, [one_point(6, 0), one_point(6, 1)], second="diag", metric=metric)
    fc = FamilyCalculus(fam)
    fc.phi(0, 0)
    with pytest.raises(ValueError, match="second='full'"):
        fc.phi(0, 1)


def test_harmonic_representative_is_not_holomorphic(moves12, ctx12):
    u = moves12.harmonic_rep(0).values
    assert np.all(np.isfinite(u))
    # a branch move changes the curve, so u is not a holomorphic section
    du = ctx12.dbar(u)
    assert ctx12.inner1(du, du).real > 1e-2 * ctx12.inner0(u, u).real


def test_covariant_derivative_fit_matches_analytic(solved12):
    mesh, _ = solved12
    calc = NodalCalculus(mesh)
    qi, qk = np.array([0, 1, 0]), np.array([1, 0, 1])
    u = NormalField(mesh, pullback_values(mesh, qi))
    exact = covariant_D_fixed_x(u, qk, mesh, calc, q_i=qi)
    fitted = covariant_D_fixed_x(u, qk, mesh, calc)
    ok = np.isfinite(fitted) & (mesh.disc < 0)
    assert ok.mean() > 0.5
    assert np.median(np.abs(fitted[ok] - exact[ok])) < 1e-3 * np.median(np.abs(exact[ok]))
