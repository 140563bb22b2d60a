import numpy as np
import pytest

from hurwitzwp.calculus import NodalCalculus
from hurwitzwp.mesh import CHART_T, CHART_W, CHART_WP


@pytest.fixture(scope="module")
def calc(solved12):
    return NodalCalculus(solved12[0])


def _finite_w(mesh):
    return np.where(np.isfinite(mesh.w), mesh.w, 0)


def test_scalar_polynomial_exact_in_w_chart(calc):
    mesh = calc.mesh
    w = _finite_w(mesh)
    f = w * np.conj(w) + 2 * w
    d = calc.fit(f)
    sel = mesh.node_chart == CHART_W
    assert np.max(np.abs(d["z"][sel] - (np.conj(w[sel]) + 2))) < 1e-8
    assert np.max(np.abs(d["zb"][sel] - w[sel])) < 1e-8
    assert np.max(np.abs(d["zzb"][sel] - 1)) < 1e-6


def test_scalar_chain_rule_in_ramification_charts(calc):
    mesh = calc.mesh
    w = _finite_w(mesh)
    f = w * np.conj(w) + 2 * w
    d = calc.fit(f)
    sel = mesh.node_chart >= CHART_T
    t = mesh.t[sel]
    # f(e + t^2): d_t = f_w 2t, d_t d_tbar = f_wwbar 4|t|^2
    assert np.max(np.abs(d["z"][sel] - (np.conj(w[sel]) + 2) * 2 * t)) < 1e-7
    assert np.max(np.abs(d["zzb"][sel] - 4 * np.abs(t) ** 2)) < 1e-5


def _away_from(calc, bad):
    """Nodes whose fit stencil contains none of the ``bad`` nodes."""
    hit = np.zeros(calc.mesh.n_nodes, bool)
    hit[bad] = True
    return ~np.any(hit[calc.nbr] & calc.valid, axis=1)


def test_vector_kind_converts_across_w_and_wprime(calc):
    mesh = calc.mesh
    # v = w^2 d/dw is -d/dw' in the w' chart; it is singular in the ramification charts
    wp = mesh.node_chart == CHART_WP
    v = np.where(wp, -1.0 + 0j, _finite_w(mesh) ** 2)
    d = calc.fit(v, "vector")
    ok = _away_from(calc, mesh.node_chart >= CHART_T)
    w_nodes = (mesh.node_chart == CHART_W) & ok
    assert w_nodes.sum() > 100 and np.any(wp & ok)
    assert np.max(np.abs(d["z"][w_nodes] - 2 * mesh.w[w_nodes])) < 1e-7
    assert np.max(np.abs(d["z"][wp & ok])) < 1e-7
    assert np.max(np.abs(d["zb"][(wp | w_nodes) & ok])) < 1e-7


def test_section_kind_matches_vector_kind_outside_discs(calc):
    mesh = calc.mesh
    wp = mesh.node_frame == 1
    u = np.where(wp, -1.0 + 0j, _finite_w(mesh) ** 2)
    d = calc.fit(u, "section")
    sel = mesh.node_chart == CHART_W
    assert np.max(np.abs(d["z"][sel] - 2 * mesh.w[sel])) < 1e-7
    assert np.max(np.abs(d["zb"])) < 1e-6


def test_log_density_kind_is_exact_for_the_flat_density(calc):
    mesh = calc.mesh
    # log of |dw|^2 in each owner chart: 0, -4 log|w'|, log|2t|^2
    vals = np.zeros(mesh.n_nodes)
    wp = mesh.node_chart == CHART_WP
    tch = mesh.node_chart >= CHART_T
    singular = (wp & (mesh.wp == 0)) | (tch & (mesh.t == 0))
    with np.errstate(divide="ignore"):
        vals[wp] = -4 * np.log(np.abs(mesh.wp[wp]))
        vals[tch] = np.log(np.abs(2 * mesh.t[tch]) ** 2)
    vals[singular] = 0
    d = calc.fit(vals, "log_density")
    sel = (mesh.node_chart == CHART_W) & _away_from(calc, singular)
    assert np.any(np.any(wp[calc.nbr] & calc.valid, axis=1) & sel)
    assert np.any(np.any(tch[calc.nbr] & calc.valid, axis=1) & sel)
    for key in ("z", "zb", "zzb"):
        assert np.max(np.abs(d[key][sel])) < 1e-9


def test_unknown_kind_rejected(calc):
    with pytest.raises(ValueError, match="unknown kind"):
        calc.fit(np.zeros(calc.mesh.n_nodes), "tensor")
