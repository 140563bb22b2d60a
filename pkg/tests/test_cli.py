"""Command-line interface: configs, reports and exit codes."""
import json
from pathlib import Path

import pytest

from hurwitzwp.cli import RunConfig, jsonable, main
from hurwitzwp.covering import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

FIXED_X = {
    "branch": {"preset": "roots_of_unity", "genus": 2},
    "resolution": 8,
    "directions": [
        {"kind": "mobius", "q": [1, 0, 0]},
        {"kind": "mobius", "q": [0, 0, 0]},
        {"kind": "mobius", "q": [0, 0, 1]},
    ],
}


def _write(tmp_path, data, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = RunConfig.load(path)
    assert cfg.branch.genus == 2


@pytest.mark.parametrize(
    "data, field",
    [
        ({}, "branch"),
        ({"branch": {"preset": "spiral"}}, "branch.preset"),
        ({"branch": {"preset": "roots_of_unity"}, "resolution": 2}, "resolution"),
        ({"branch": {"preset": "roots_of_unity"}, "tolerances": {"tol_pde": -1}}, "tolerances.tol_pde"),
        ({"branch": {"preset": "roots_of_unity"}, "directions": [{"kind": "mobius"}]}, "directions[0]"),
        ({"branch": {"preset": "roots_of_unity"}, "outputs": ["pictures"]}, "outputs"),
        ({"branch": {"preset": "roots_of_unity"}, "disk_model": {"family": "flat"}}, "disk_model.family"),
        ({"branch": {"preset": "roots_of_unity"}, "sweep": {"resolutions": [8, "x"]}}, "sweep.resolutions"),
    ],
)
def test_invalid_config_names_the_field(tmp_path, capsys, data, field):
    with pytest.raises(ConfigError, match=field.replace("[", r"\[").replace("]", r"\]")):
        RunConfig.from_dict(data)
    code = main(["uniformize", "--config", str(_write(tmp_path, data)), "--out", str(tmp_path)])
    assert code == 2
    assert field in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    assert main(["uniformize", "--config", str(tmp_path / "nope.json")]) == 2


def test_jsonable_handles_complex_and_nan():
    import numpy as np

    out = jsonable({"a": np.array([1 + 2j, np.nan]), "b": np.float64(np.inf)})
    assert json.loads(json.dumps(out)) == {"a": [[1.0, 2.0], [None, 0.0]], "b": None}


def test_uniformize_report_is_deterministic(tmp_path):
    cfg = _write(tmp_path, {"branch": {"preset": "roots_of_unity"}, "resolution": 8})
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["uniformize", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["uniformize", "--config", str(cfg), "--out", str(b)]) == 0
    for name in ("uniformize.json", "metric.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rep = json.loads((a / "uniformize.json").read_text())
    assert rep["convention"]["epsilon"] == 1
    assert b"\r\n" not in (a / "metric.csv").read_bytes()


def test_gram_flags_the_trivial_direction(tmp_path):
    assert main(["gram", "--config", str(_write(tmp_path, FIXED_X)), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "gram.json").read_text())
    assert rep["wp_null_directions"] == [1]
    assert rep["positive_definite"] is False
    assert "WP-null" in rep["flags"][0]


def test_gram_needs_directions(tmp_path):
    cfg = _write(tmp_path, {"branch": {"preset": "roots_of_unity"}, "resolution": 8})
    assert main(["gram", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_curvature_reports_oracle_block(tmp_path):
    data = dict(FIXED_X, directions=[FIXED_X["directions"][0], {"kind": "mobius", "q": [0, 1, 0]}, FIXED_X["directions"][2]])
    assert main(["curvature", "--config", str(_write(tmp_path, data)), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "curvature.json").read_text())
    oracle = rep["oracle"]
    assert oracle["tolerance"] == 0.02
    assert 0 < oracle["rel_frobenius_error"] < 0.1
    assert set(rep["summands"]) == {"green", "quartic"}
    assert (tmp_path / "curvature.csv").read_text().startswith("i,j,k,l,")


def test_verify_passes(tmp_path):
    data = {
        "branch": {"preset": "roots_of_unity"},
        "resolution": 8,
        "disk_model": {"family": "warped", "samples": 20},
    }
    assert main(["verify", "--config", str(_write(tmp_path, data)), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "verify.json").read_text())
    assert rep["pass"] is True
    assert rep["mesh"]["checks"]["dim_H0"]["value"] == 3


def test_verify_failure_exits_1(tmp_path):
    data = {
        "branch": {"preset": "roots_of_unity"},
        "tolerances": {"tol_identity": 1e-40},
        "outputs": ["curvature"],
        "disk_model": {"family": "warped", "samples": 5},
    }
    assert main(["verify", "--config", str(_write(tmp_path, data)), "--out", str(tmp_path)]) == 1
