import json
import subprocess
import sys

import pytest

from twofactor.cli import ConfigError, main, parse_config

BASE = {
    "model": {"kind": "WW1", "a": 1.0, "b": 1.0, "kappa": 0.0, "lambda": 1.0, "alpha": 1.5},
    "shape": {"theta": 0.3, "delta": 1.0},
    "path": {"t_end": 1.0, "dt": 0.01, "seed": 7, "record_every": 10},
    "grid": {"s_min": 0.01, "s_max": 10.0, "n_s": 10, "n_r": 10, "y_tilde": [0.0, 1.0]},
    "n_paths": 300,
    "write_paths": True,
}


def _config(tmp_path, name="run", **over):
    cfg = {**BASE, "output_dir": str(tmp_path / name), **over}
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(cfg))
    return p


def test_certify_task(tmp_path):
    assert main(["--config", str(_config(tmp_path)), "--task", "certify"]) == 0
    out = tmp_path / "run"
    cert = json.loads((out / "certificate.json").read_text())
    man = json.loads((out / "manifest.json").read_text())
    assert cert["zeta"] > 0 and man["status"] == 0 and man["seed"] == 7
    assert (out / "paths" / "coupled.csv").exists()


def test_decay_equal_pair_is_flagged(tmp_path):
    p = _config(tmp_path, init_pair=[[1.0, 1.0], [1.0, 1.0]], c=10.0, zeta=0.5)
    assert main(["--config", str(p), "--task", "decay"]) == 0
    rep = json.loads((tmp_path / "run" / "decay.json").read_text())
    assert rep["degenerate"]


def test_failing_certificate_exits_one(tmp_path, capsys):
    p = _config(tmp_path, model={**BASE["model"], "b": 0.0})
    assert main(["--config", str(p), "--task", "certify"]) == 1
    assert "FAILED certify" in capsys.readouterr().err
    assert json.loads((tmp_path / "run" / "manifest.json").read_text())["status"] == 1


def test_malformed_json_writes_nothing(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"model": {"kind": "WW1",}, "output_dir": "%s"}' % (tmp_path / "out"))
    assert main(["--config", str(p)]) == 2
    assert "line 1" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("patch,where", [
    ({"model": {"kind": "WW1", "alpha": 2.5}}, "model.alpha"),
    ({"bogus": 1}, "bogus"),
    ({"task": "nope"}, "task"),
    ({"n_paths": 0}, "n_paths"),
])
def test_config_diagnostics(patch, where):
    with pytest.raises(ConfigError) as e:
        parse_config(json.dumps({**BASE, "output_dir": "x", **patch}))
    assert e.value.where == where


def test_csv_byte_identical_on_rerun(tmp_path):
    for name in ("a", "b"):
        assert main(["--config", str(_config(tmp_path, name)), "--task", "wasserstein"]) == 0
    for f in ("wasserstein.csv", "paths/coupled.csv", "paths/coupled.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_run_seed_override(tmp_path, monkeypatch):
    monkeypatch.setenv("RUN_SEED", "99")
    assert parse_config(json.dumps({**BASE, "output_dir": "x"})).path.seed == 99
    monkeypatch.setenv("RUN_SEED", "abc")
    with pytest.raises(ConfigError):
        parse_config(json.dumps({**BASE, "output_dir": "x"}))


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "twofactor", "--config", str(_config(tmp_path)), "--task", "certify"],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
