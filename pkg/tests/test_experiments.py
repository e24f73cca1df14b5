"""Experiment orchestration: configs, manifests, determinism, CLI."""

import json
import os

import numpy as np
import pytest

from nlslab import cli
from nlslab import discretization as dz
from nlslab import experiments as ex

SMALL_GRID = {"d": 6, "r_max": 40.0, "n": 800}


def test_validate_config_accepts_defaults():
    assert ex.validate_config({"scenario": "ground-state"}) == []
    assert ex.validate_config({"scenario": "spectrum",
                               "grid": dict(SMALL_GRID)}) == []


def test_validate_config_reports_field_paths():
    errs = ex.validate_config({"scenario": "ground-state",
                               "grid": {"d": 2, "n": "many"}})
    joined = "\n".join(errs)
    assert "grid.r_max" in joined
    assert "grid.n" in joined
    errs = ex.validate_config({"scenario": "nope"})
    assert any("scenario" in e for e in errs)
    errs = ex.validate_config({"scenario": "evolve-near-solution", "sign": 0})
    assert any("sign" in e for e in errs)
    errs = ex.validate_config({"scenario": "classify-custom"})
    assert any("initial" in e for e in errs)
    errs = ex.validate_config({"scenario": "build-series",
                               "series": {"k": 0}})
    assert any("series.k" in e for e in errs)
    errs = ex.validate_config({"scenario": "sweep", "ranges": {"k": []}})
    assert any("ranges.k" in e for e in errs)
    errs = ex.validate_config({"scenario": "ground-state",
                               "evolver": {"dt": -1}})
    assert any("evolver.dt" in e for e in errs)


def test_config_hash_is_canonical():
    a = {"scenario": "ground-state", "grid": {"d": 6, "n": 800, "r_max": 40.0}}
    b = {"grid": {"r_max": 40.0, "d": 6, "n": 800}, "scenario": "ground-state"}
    assert ex.config_hash(a) == ex.config_hash(b)
    assert len(ex.config_hash(a)) == 12
    c = dict(a)
    c["grid"] = {"d": 6, "n": 801, "r_max": 40.0}
    assert ex.config_hash(a) != ex.config_hash(c)


def test_run_rejects_invalid_config(tmp_path):
    with pytest.raises(ex.ConfigError):
        ex.run({"scenario": "ground-state", "grid": {"d": 1}},
               out_dir=str(tmp_path))
    assert os.listdir(tmp_path) == []  # no output created


def test_ground_state_run(tmp_path):
    cfg = {"scenario": "ground-state", "grid": dict(SMALL_GRID)}
    manifest = ex.run(cfg, out_dir=str(tmp_path))
    assert manifest["ok"]
    rundir = manifest["run_dir"]
    assert os.path.basename(rundir) == "ground-state-%s" % ex.config_hash(cfg)
    for name in manifest["outputs"] + ["manifest.json"]:
        assert os.path.exists(os.path.join(rundir, name))
    meta = dz.load_json(os.path.join(rundir, "ground_state.json"))
    assert meta["pohozaev_gap"] <= 1e-6
    assert manifest["schema_version"] == ex.SCHEMA_VERSION
    assert "numpy" in manifest["versions"]


def test_reruns_are_reproducible(tmp_path):
    cfg = {"scenario": "ground-state", "grid": dict(SMALL_GRID)}
    m1 = ex.run(cfg, out_dir=str(tmp_path))
    with open(os.path.join(m1["run_dir"], "w.csv"), "rb") as f:
        first = f.read()
    m2 = ex.run(cfg, out_dir=str(tmp_path))
    assert m1["run_dir"] == m2["run_dir"]
    with open(os.path.join(m2["run_dir"], "w.csv"), "rb") as f:
        assert f.read() == first


def test_spectrum_run(tmp_path):
    cfg = {"scenario": "spectrum", "grid": dict(SMALL_GRID)}
    manifest = ex.run(cfg, out_dir=str(tmp_path), check=True)
    assert manifest["checks"]["block-residual"]["passed"]
    meta = dz.load_json(os.path.join(manifest["run_dir"], "eigenpair.json"))
    assert meta["e0"] > 0
    assert set(meta) >= {"d", "r_max", "n", "e0", "residual", "normalization"}


def test_build_series_run(tmp_path):
    cfg = {"scenario": "build-series", "grid": dict(SMALL_GRID),
           "series": {"k": 1, "a": 1.0}}
    manifest = ex.run(cfg, out_dir=str(tmp_path))
    assert manifest["ok"]
    assert manifest["checks"]["residual-rate"]["relative_error"] <= 0.10
    assert os.path.exists(os.path.join(manifest["run_dir"],
                                       "near_solution", "profile_1.csv"))


def test_classify_run_blowup(tmp_path):
    cfg = {"scenario": "classify-custom", "grid": dict(SMALL_GRID),
           "initial": {"kind": "scaled-w", "factor": 1.8},
           "evolver": {"dt": 0.005, "t_span": [0.0, 30.0],
                       "track_modulation": False}}
    manifest = ex.run(cfg, out_dir=str(tmp_path))
    assert manifest["checks"]["classified"]["value"] == "blowup"
    report = dz.load_json(os.path.join(manifest["run_dir"], "report.json"))
    assert report["regime"] == "blowup"


def test_classify_run_from_field_file(tmp_path):
    # a subcritical gaussian pulse disperses well before the reflection horizon
    grid = dz.build_grid(**SMALL_GRID)
    path = str(tmp_path / "init.csv")
    dz.save_field(path, (0.8 * np.exp(-grid.r ** 2 / 4)).astype(complex), grid)
    cfg = {"scenario": "classify-custom", "grid": dict(SMALL_GRID),
           "initial": {"kind": "field", "path": path},
           "evolver": {"dt": 0.01, "t_span": [0.0, 15.0],
                       "track_modulation": False}}
    manifest = ex.run(cfg, out_dir=str(tmp_path))
    assert manifest["checks"]["classified"]["value"] == "scattering-proxy"


def test_sweep_run(tmp_path):
    cfg = {"ranges": {"d": [6], "n": [800], "k": [1, 2], "a": [1.0]},
           "grid": {"r_max": 40.0}}
    manifest = ex.sweep(cfg, out_dir=str(tmp_path), workers=2)
    assert manifest["ok"]
    rows = np.loadtxt(os.path.join(manifest["run_dir"], "aggregate.csv"),
                      delimiter=",", skiprows=1)
    assert rows.shape == (2, 8)
    assert list(rows[:, 2]) == [1.0, 2.0]  # sorted by cell key
    for row in rows:
        assert abs(row[6] - row[7]) / row[7] <= 0.10  # rate near target


# ---------------------------------------------------------------------------
# CLI

def _write_cfg(tmp_path, cfg, name="cfg.json"):
    path = str(tmp_path / name)
    with open(path, "w") as f:
        json.dump(cfg, f)
    return path


def test_cli_ground_state(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, {"scenario": "ground-state",
                                "grid": dict(SMALL_GRID)})
    rc = cli.main(["ground-state", "--config", cfg, "--out",
                   str(tmp_path / "runs"), "--check"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["ok"] is True
    assert "pohozaev-identity" in out["checks"]


def test_cli_rejects_bad_config(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, {"scenario": "ground-state", "grid": {"d": 1}})
    rc = cli.main(["ground-state", "--config", cfg, "--out", str(tmp_path)])
    assert rc == 2
    assert "grid" in capsys.readouterr().err


def test_cli_rejects_unreadable_config(tmp_path, capsys):
    path = str(tmp_path / "broken.json")
    with open(path, "w") as f:
        f.write("{not json")
    rc = cli.main(["ground-state", "--config", path])
    assert rc == 2


def test_cli_requires_config_for_classify(capsys):
    assert cli.main(["classify"]) == 2
    assert "--config" in capsys.readouterr().err


def test_cli_scenario_mismatch(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, {"scenario": "spectrum"})
    rc = cli.main(["ground-state", "--config", cfg])
    assert rc == 2


def test_cli_wpm_sign_flag_overrides(tmp_path, capsys):
    # config parsing path only: an invalid grid keeps the run from starting,
    # but the sign must have been merged before validation
    cfg = _write_cfg(tmp_path, {"scenario": "evolve-near-solution",
                                "sign": 0, "grid": {"d": 1}})
    rc = cli.main(["wpm", "--config", cfg, "--sign", "-1",
                   "--out", str(tmp_path)])
    assert rc == 2
    err = capsys.readouterr().err
    assert "grid" in err and "sign" not in err
