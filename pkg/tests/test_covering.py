import json

import numpy as np
import pytest

from hurwitzwp.covering import (
    BranchConfiguration,
    ConfigError,
    TargetMetric,
    dbar_residual,
    eval_pullback_section,
    fubini_study,
    riemann_hurwitz,
)
from hurwitzwp.mesh import CHART_T, CHART_W, CHART_WP, build_mesh

from helpers import rotation_map


@pytest.fixture(scope="module")
def sixth():
    return BranchConfiguration.roots_of_unity(genus=2)


@pytest.fixture(scope="module")
def mesh16(sixth):
    return build_mesh(sixth, 16)


# -- configuration ---------------------------------------------------------

@pytest.mark.parametrize("n,g,b", [(2, 2, 6), (3, 2, 8), (1, 0, 0), (2, 0, 2)])
def test_riemann_hurwitz(n, g, b):
    assert riemann_hurwitz(n, g) == b


@pytest.mark.parametrize("n,g", [(0, 1), (2, -1)])
def test_riemann_hurwitz_rejects(n, g):
    with pytest.raises(ConfigError):
        riemann_hurwitz(n, g)


def test_config_validation_names_field():
    with pytest.raises(ConfigError, match="branch_points"):
        BranchConfiguration(2, 2, (0, 1, 2))
    with pytest.raises(ConfigError, match="coincide"):
        BranchConfiguration(2, 2, (0, 1, 2, 3, 4, 4))
    with pytest.raises(ConfigError, match="genus"):
        BranchConfiguration.from_dict({"n": 2, "branch_points": []})
    with pytest.raises(ConfigError, match=r"branch_points\[1\]"):
        BranchConfiguration.from_dict({"n": 2, "genus": 2, "branch_points": [[0, 0], [1]]})


def test_config_json_roundtrip(tmp_path, sixth):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(sixth.to_dict()))
    again = BranchConfiguration.from_json(p)
    assert np.allclose(again.e, sixth.e)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="malformed"):
        BranchConfiguration.from_json(bad)


def test_config_derived_quantities(sixth):
    assert sixth.b == 6
    assert sixth.h0_dim == 3
    assert sixth.min_separation == pytest.approx(1.0)
    assert sixth.r_ram == pytest.approx(1 / 3)


# -- target metric ---------------------------------------------------------

def test_fubini_study_values():
    h0, g0, k0 = fubini_study(0.0)
    assert h0 == pytest.approx(2.0)
    assert g0 == 0 and k0 == pytest.approx(2.0)
    assert fubini_study(1.0)[0] == pytest.approx(0.5)


@pytest.mark.parametrize("eps", [-1, 0, 1])
def test_target_curvature_residual(eps):
    rng = np.random.default_rng(0)
    w = rng.normal(size=100) + 1j * rng.normal(size=100)
    if eps == -1:
        w = 0.9 * w / (1 + np.abs(w))  # stay inside the disk
    assert np.max(TargetMetric(eps).curvature_residual(w)) < 1e-12


def test_target_rejects_bad_epsilon():
    with pytest.raises(ConfigError):
        TargetMetric(2)


# -- mesh -----------------------------------------------------------------

@pytest.mark.parametrize("res", [8, 16])
def test_euler_characteristic(sixth, res):
    assert build_mesh(sixth, res).euler_characteristic == -2


@pytest.mark.parametrize("genus", [1, 3])
def test_euler_characteristic_other_genus(genus):
    cfg = BranchConfiguration.roots_of_unity(genus=genus)
    assert build_mesh(cfg, 12).euler_characteristic == 2 - 2 * genus


def test_asymmetric_configuration_meshes():
    cfg = BranchConfiguration(2, 2, (0.1 + 0.2j, 1.3, -0.9 + 0.4j, 0.5 - 1.1j, -1.2 - 0.8j, 2.0 + 1.5j))
    m = build_mesh(cfg, 12)
    assert m.euler_characteristic == -2
    assert np.all(m.tri_area > 0)


def test_triangles_positively_oriented(mesh16):
    assert np.all(mesh16.tri_area > 0)


def _disc_sphere_area(e, r, n=400):
    # Gauss-Legendre in the radius, trapezoid in the angle (periodic)
    x, wts = np.polynomial.legendre.leggauss(n)
    rad = 0.5 * r * (x + 1)
    th = 2 * np.pi * np.arange(n) / n
    pts = e + rad[:, None] * np.exp(1j * th[None, :])
    h = 2 / (1 + np.abs(pts) ** 2) ** 2
    return float(np.sum(0.5 * r * wts[:, None] * rad[:, None] * h) * (2 * np.pi / n) * 2)


def test_base_region_area(sixth, mesh16):
    m = mesh16
    tm = TargetMetric(1)
    base = m.tri_chart < CHART_T
    zq = m.quad_points[base]
    h = tm.h(zq).real  # same formula in w and w' charts
    area = np.sum(2 * m.quad_weights[base] * h) / 2  # two sheets
    expected = 4 * np.pi - sum(_disc_sphere_area(e, m.params.r_ram) for e in sixth.e)
    assert area == pytest.approx(expected, rel=2e-3)


def test_ramification_disc_weight(mesh16):
    m = mesh16
    for k in range(6):
        sel = m.tri_chart == CHART_T + k
        # the t-disc of radius sqrt(r) has flat area pi r
        assert m.tri_area[sel].sum() == pytest.approx(np.pi * m.params.r_ram, rel=5e-3)


def test_refinement_quadruples_nodes(sixth):
    n1 = build_mesh(sixth, 8).n_nodes
    n2 = build_mesh(sixth, 16).n_nodes
    assert 3.5 < n2 / n1 < 4.5


def test_zeta_vanishes_only_at_ramification_points(mesh16):
    m = mesh16
    zero = np.abs(m.zeta) == 0
    assert zero.sum() == 6
    assert np.all(m.t[zero] == 0)


def test_zeta_transforms_on_overlaps(mesh16):
    m = mesh16
    rng = np.random.default_rng(3)
    ring = np.nonzero((m.disc >= 0) & (np.abs(np.abs(m.t) ** 2 - m.params.r_ram) < 1e-12))[0]
    nodes = rng.choice(ring, 20, replace=False)
    tch = CHART_T + m.disc[nodes]
    lhs = m.zeta_in(nodes, tch)
    rhs = m.zeta_in(nodes, np.full(len(nodes), CHART_W)) * m.chart_jacobian(nodes, np.full(len(nodes), CHART_W), tch)
    assert np.max(np.abs(lhs - rhs)) < 1e-8


def test_chart_jacobian_w_wprime(mesh16):
    m = mesh16
    nodes = np.nonzero(np.isfinite(m.w) & (np.abs(m.w) > 1.5))[0][:10]
    j = m.chart_jacobian(nodes, np.full(10, CHART_W), np.full(10, CHART_WP))
    assert np.allclose(j, -m.w[nodes] ** 2)


def test_too_close_branch_points_named():
    cfg = BranchConfiguration(2, 2, (0, 3, -3, 3j, -3j, 0.6))
    with pytest.raises(ConfigError, match="branch points 0 and 5"):
        build_mesh(cfg, 8, r_ram=0.3)


def test_resolution_rejected(sixth):
    with pytest.raises(ConfigError):
        build_mesh(sixth, 2)


def test_mesh_deterministic(sixth):
    a = build_mesh(sixth, 8).to_json()
    b = build_mesh(sixth, 8).to_json()
    assert a == b
    data = json.loads(a)
    assert {"nodes", "cells", "weights", "config"} <= set(data)


def test_mesh_rotation_symmetric(mesh16):
    d, idx = rotation_map(mesh16)
    assert d.max() < 1e-10
    assert len(np.unique(idx)) == mesh16.n_nodes
    tris = {tuple(sorted(t)) for t in mesh16.tris.tolist()}
    assert all(tuple(sorted(idx[t])) in tris for t in mesh16.tris)


def test_moved_mesh_keeps_disc_nodes_in_t(mesh16):
    v = np.zeros(6, complex)
    v[2] = 1 - 0.5j
    mm = mesh16.moved(v, 1e-3)
    inside = mesh16.disc == 2
    assert np.allclose(mm.w[inside] - mesh16.w[inside], 1e-3 * v[2])
    assert np.allclose(mm.w[mesh16.disc == 0], mesh16.w[mesh16.disc == 0])
    assert np.allclose(mm.config.e[2], mesh16.config.e[2] + 1e-3 * v[2])
    assert np.all(mm.tri_area > 0)
    xi = mesh16.branch_xi(v)
    assert np.all(xi[inside] == v[2]) and np.all(xi[~inside] == 0)


# -- pullback sections ------------------------------------------------------

def test_pullback_on_ramification_chart(mesh16):
    m = mesh16
    u = eval_pullback_section(m, (0, 1, 0))
    sel = m.node_chart >= CHART_T
    e = m.config.e[m.disc[sel]]
    assert np.max(np.abs(u.values[sel] - (e + m.t[sel] ** 2))) < 1e-13


def test_pullback_constant_section(mesh16):
    u = eval_pullback_section(mesh16, (1, 0, 0))
    w_frame = mesh16.node_chart != CHART_WP
    assert np.all(u.values[w_frame] == 1)


def test_pullback_sections_discretely_holomorphic(sixth):
    res = [8, 16, 32]
    for q in [(1, 0, 0), (0, 1, 0), (0, 0, 1)]:
        r = [dbar_residual(eval_pullback_section(build_mesh(sixth, n), q)) for n in res]
        orders = np.log2(np.array(r[:-1]) / np.array(r[1:]))
        assert r[-1] < 0.02
        assert np.all(orders >= 0.9)


def test_pullback_basis_independent(mesh16):
    m = mesh16
    h = TargetMetric(1).h(m.node_frame_coord).real
    a = m.node_lumped_area()
    U = np.stack([eval_pullback_section(m, q).values for q in np.eye(3)])
    G = (U * h * a) @ U.conj().T
    ev = np.linalg.eigvalsh(G)
    assert np.sum(ev > 1e-6 * ev.max()) == 3 == m.config.h0_dim
