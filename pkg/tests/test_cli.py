import hashlib
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from thermodc.cli import main
from thermodc.config import ConfigError, RunConfig, load_config, parse_config, with_overrides
from thermodc.metrics import summary_from_dict
from thermodc.workload import load_trace_dir, parse_trace, serialize_trace

SMALL = {
    "datacenter": {"n_hosts": 12, "hosts_per_rack": 4},
    "workload": {"synth": {"n_vms": 8}},
    "run": {"duration_s": 3600, "seed": 3},
}


def write_config(path: Path, doc=None, **sections) -> Path:
    doc = json.loads(json.dumps(doc or SMALL))
    for key, val in sections.items():
        doc.setdefault(key, {}).update(val)
    path.write_text(json.dumps(doc, indent=2))
    return path


def digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_run_writes_outputs(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json")
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["intervals.csv", "summary.json"]
    assert len(out.joinpath("intervals.csv").read_text().splitlines()) == 13
    doc = json.loads(out.joinpath("summary.json").read_text())
    assert doc["schema"] == 1
    summary_from_dict(doc)
    assert "IntegratedFreqUtil" in capsys.readouterr().out


def test_run_rejects_bad_threshold(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", policy={"overload_threshold": 1.5})
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "policy.overload_threshold" in err and "line" in err


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", run={"duraton_s": 10})
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "run.duraton_s" in capsys.readouterr().err


def test_malformed_json(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text('{"run": {"seed": 1,}}')
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "line 1" in capsys.readouterr().err


def test_missing_config_is_config_error(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o"),
                 "--quiet"]) == 2


def test_bad_trace_is_runtime_error(tmp_path, capsys):
    traces = tmp_path / "traces"
    traces.mkdir()
    (traces / "vm0.csv").write_text("header\n1;1;2400;x;0;1024;0;0;0;0;0\n")
    doc = {"datacenter": {"n_hosts": 2, "hosts_per_rack": 2}, "workload": {"trace_dir": "traces"},
           "run": {"duration_s": 600}}
    cfg = write_config(tmp_path / "c.json", doc)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 1
    assert "line 2" in capsys.readouterr().err


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    for name in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / name), "--quiet"]) == 0
    for f in ("intervals.csv", "summary.json"):
        assert digest(tmp_path / "a" / f) == digest(tmp_path / "b" / f)


def test_rerun_in_fresh_interpreters_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    for name, hashseed in (("a", "1"), ("b", "2")):
        env = dict(os.environ, PYTHONHASHSEED=hashseed)
        subprocess.run([sys.executable, "-m", "thermodc", "run", "--config", str(cfg),
                        "--out", str(tmp_path / name), "--quiet"], check=True, env=env)
    for f in ("intervals.csv", "summary.json"):
        assert digest(tmp_path / "a" / f) == digest(tmp_path / "b" / f)


def test_seed_and_policy_overrides(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet",
                 "--seed", "9", "--policy", "MinPowerIncrease"]) == 0
    doc = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert doc["config"]["run"]["seed"] == 9
    assert doc["config"]["policy"]["criterion"] == "MinPowerIncrease"
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "p"), "--quiet",
                 "--policy", "Nope"]) == 2


def test_echoed_config_reproduces_run(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a"), "--quiet"]) == 0
    echo = json.loads((tmp_path / "a" / "summary.json").read_text())["config"]
    again = tmp_path / "echo.json"
    again.write_text(json.dumps(echo))
    assert main(["run", "--config", str(again), "--out", str(tmp_path / "b"), "--quiet"]) == 0
    for f in ("intervals.csv", "summary.json"):
        assert digest(tmp_path / "a" / f) == digest(tmp_path / "b" / f)


def test_compare_default_policies(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json")
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(cfg), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["comparison.json", "integrated", "max_power", "min_power"]
    for name in ("integrated", "max_power", "min_power"):
        assert (out / name / "intervals.csv").exists() and (out / name / "summary.json").exists()
    doc = json.loads((out / "comparison.json").read_text())
    assert doc["schema"] == 1 and doc["baseline"] == "min_power"
    assert set(doc["runs"]) == {"integrated", "max_power", "min_power"}
    assert doc["deltas"]["min_power"]["total_energy_pct"] == 0.0
    assert "integrated" in capsys.readouterr().out


def test_compare_identical_policies_have_zero_deltas(tmp_path):
    same = {"criterion": "IntegratedFreqUtil"}
    cfg = write_config(tmp_path / "c.json", compare={"baseline": "a", "policies": {"a": same, "b": same}})
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    d = json.loads((out / "comparison.json").read_text())["deltas"]["b"]
    assert d == {"total_energy_pct": 0.0, "it_energy_pct": 0.0, "cooling_energy_pct": 0.0,
                 "delta_pue": 0.0, "delta_migrations": 0, "delta_overload_fraction": 0.0}


def test_compare_over_seeds(tmp_path):
    cfg = write_config(tmp_path / "c.json", run={"seeds": [1, 2]})
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    doc = json.loads((out / "comparison.json").read_text())
    assert set(doc["per_seed_deltas"]) == {"1", "2"}
    assert (out / "integrated" / "seed2" / "summary.json").exists()


def test_compare_unknown_baseline(tmp_path):
    cfg = write_config(tmp_path / "c.json", compare={"baseline": "zzz"})
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 2


def test_gen_workload_and_reingest(tmp_path):
    traces = tmp_path / "traces"
    args = ["gen-workload", "--out", str(traces), "--n-vms", "5", "--duration-s", "3600", "--seed", "4", "--quiet"]
    assert main(args) == 0
    files = sorted(traces.glob("*.csv"))
    assert len(files) == 5
    for f in files:
        s = parse_trace(f.read_text(), f.stem)
        assert serialize_trace(s) == f.read_text()
    again = tmp_path / "again"
    assert main(args[:2] + [str(again)] + args[3:]) == 0
    assert [digest(f) for f in files] == [digest(f) for f in sorted(again.glob("*.csv"))]

    doc = {"datacenter": {"n_hosts": 8, "hosts_per_rack": 4},
           "workload": {"trace_dir": "traces"}, "run": {"duration_s": 3600}}
    cfg = write_config(tmp_path / "c.json", doc)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    assert len((tmp_path / "o" / "intervals.csv").read_text().splitlines()) == 13


@pytest.mark.parametrize("extra", [["--n-vms", "0"], ["--flavor-mix", "1,x,1"], ["--flavor-mix", "1,1"]])
def test_gen_workload_invalid_params(tmp_path, extra):
    assert main(["gen-workload", "--out", str(tmp_path / "t"), "--quiet"] + extra) == 2


def test_default_config_validates(tmp_path):
    p = tmp_path / "d.json"
    assert main(["default-config", "--out", str(p)]) == 0
    cfg = load_config(p)
    assert cfg.datacenter.n_hosts == 200 and cfg.policy.criterion == "IntegratedFreqUtil"


def test_config_needs_exactly_one_workload_source():
    with pytest.raises(ConfigError):
        parse_config(json.dumps({"workload": {"trace_dir": "x", "synth": {}}}))


def test_with_overrides_validates():
    cfg = RunConfig()
    assert with_overrides(cfg, seed=5).run.seed == 5
    with pytest.raises(ConfigError):
        with_overrides(cfg, criterion="Fastest")
