import json
from pathlib import Path

import numpy as np
import pytest

from qrevdiff import experiments
from qrevdiff.cli import main
from qrevdiff.config import parse_config, parse_config_text
from qrevdiff.errors import InsufficientSweepError
from qrevdiff.experiments import correspondence_report, hbar_sweep, run_scenario, sha256_file

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
CHEAP = ["hilbert.dim=32", "grid.n_q=128", "grid.n_p=128", "time.T=0.5", "time.round_trip_T=0.5",
         "time.fp_dt=4e-3", "time.fp_stride=10", "time.checkpoints=2", "ensemble.size=5000",
         "petz.dim=10", "petz.T=0.2", "petz.dt=1e-3"]


def _args(command, out, *extra, config="damped_ho.ini"):
    argv = [command, "--config", str(CONFIGS / config), "--out", str(out)]
    for item in CHEAP:
        argv += ["--override", item]
    return argv + list(extra)


def test_validate_config_prints_resolved_config(capsys, tmp_path):
    assert main(["validate-config", "--config", str(CONFIGS / "damped_ho.ini")]) == 0
    out = capsys.readouterr()
    cfg = parse_config_text(out.out)
    assert cfg.name == "damped-harmonic-oscillator" and cfg["physics"]["q0"] == 1.5
    assert "defaults filled" in out.err


def test_config_errors_exit_2_and_leave_only_a_failure_manifest(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\nname = damped-harmonic-oscillator\n[physics]\nhbarr = 1\n")
    out = tmp_path / "run"
    assert main(["forward-lindblad", "--config", str(bad), "--out", str(out)]) == 2
    assert "unknown-key" in capsys.readouterr().err
    assert sorted(p.name for p in out.iterdir()) == ["manifest.json"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "config-error" and man["error"]["code"] == "unknown-key" and man["files"] == []
    assert main(["validate-config", "--config", str(tmp_path / "missing.ini")]) == 2
    assert main(["forward-lindblad", "--config", str(CONFIGS / "damped_ho.ini"), "--out", str(out),
                 "--override", "grid.n_q=100"]) == 2


def test_successful_run_lists_every_output_with_digest(tmp_path, capsys):
    out = tmp_path / "fwd"
    assert main(_args("forward-lindblad", out)) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["status"] == "ok"
    man = json.loads((out / "manifest.json").read_text())
    produced = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    assert sorted(f["path"] for f in man["files"]) == produced
    for f in man["files"]:
        assert f["sha256"] == sha256_file(out / f["path"])
    assert man["config"]["hilbert"]["dim"] == 32
    assert "physics.mass" in man["defaults_filled"]
    assert man["seeds"] == {"ensemble": 20240611}
    assert man["metrics"]["lindblad_trace_drift"]["passed"]


def test_threshold_and_numerical_exit_codes(tmp_path):
    assert main(_args("reverse-sde", tmp_path / "sde")) == 4
    man = json.loads((tmp_path / "sde" / "manifest.json").read_text())
    assert man["status"] == "threshold"
    coarse = _args("fokker-planck", tmp_path / "fp", "--override", "grid.n_q=64", "--override", "grid.n_p=64")
    assert main(coarse) == 3
    man = json.loads((tmp_path / "fp" / "manifest.json").read_text())
    assert man["status"] == "numerical" and man["error"]["type"] == "StepSizeError"


def test_unexpected_exceptions_are_recorded(tmp_path, monkeypatch):
    def boom(cfg, out=None):
        raise RuntimeError("kaboom")

    monkeypatch.setitem(experiments.PIPELINES, "forward-lindblad", boom)
    cfg = parse_config(CONFIGS / "damped_ho.ini")
    man = run_scenario(cfg, "forward-lindblad", tmp_path)
    assert man.status == "internal-error" and experiments.exit_code(man) == 1
    assert json.loads((tmp_path / "manifest.json").read_text())["error"]["message"] == "kaboom"


def test_seed_flag_changes_ensemble_output(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    main(_args("reverse-sde", a, "--seed", "5"))
    main(_args("reverse-sde", b, "--seed", "5", "--threads", "3"))
    main(_args("reverse-sde", c, "--seed", "6"))
    da = {f["path"]: f["sha256"] for f in json.loads((a / "manifest.json").read_text())["files"]}
    db = {f["path"]: f["sha256"] for f in json.loads((b / "manifest.json").read_text())["files"]}
    dc = {f["path"]: f["sha256"] for f in json.loads((c / "manifest.json").read_text())["files"]}
    assert da == db
    assert da["ensemble_recovered.csv"] != dc["ensemble_recovered.csv"]


def test_hbar_sweep_validation_and_flags(tmp_path):
    cfg = parse_config(CONFIGS / "damped_ho.ini").with_overrides(["grid.n_q=128", "grid.n_p=128"])
    with pytest.raises(InsufficientSweepError):
        hbar_sweep(cfg, [0.1, 0.05])
    with pytest.raises(InsufficientSweepError):
        hbar_sweep(cfg, [0.1, 0.1, 0.05])
    res = hbar_sweep(cfg, out=tmp_path)
    sweep = res.data["sweep"]
    assert sweep["rhs_residual"]["floor_limited"]
    assert (tmp_path / "hbar_00" / "residuals.csv").is_file()
    rows = (tmp_path / "hbar_sweep.csv").read_text().splitlines()
    assert len(rows) == 5
    ou = parse_config(CONFIGS / "ou_classical.ini")
    man = run_scenario(ou, "hbar-sweep", tmp_path / "ou")
    assert man.status == "config-error"


def test_unitary_report(tmp_path):
    cfg = parse_config(CONFIGS / "unitary_only.ini").with_overrides(CHEAP)
    res = correspondence_report(cfg, tmp_path)
    assert len(res.data["report_rows"]) == 4
    assert res.metrics["petz_recovery"].value <= 1e-6
    assert res.data["diffusion_max"] == 0.0
    assert res.metrics["two_route_residual"].value <= 1e-10
    lines = (tmp_path / "correspondence_report.csv").read_text().splitlines()
    assert lines[0] == "arrow,metric,value,threshold,status" and len(lines) == 5


def test_classical_report_skips_quantum_arrows(tmp_path):
    cfg = parse_config(CONFIGS / "ou_classical.ini").with_overrides(
        ["grid.n_q=128", "grid.n_p=128", "time.T=0.5", "time.round_trip_T=0.5", "time.fp_dt=4e-3"])
    res = correspondence_report(cfg, tmp_path)
    status = {row[0]: row[4] for row in res.data["report_rows"]}
    assert status == {"forward-reduction": "skipped", "petz-reversal": "skipped",
                      "bayes-reversal": "pass", "reduced-reversal": "skipped"}


def test_module_entry_point(tmp_path):
    import subprocess
    import sys
    proc = subprocess.run([sys.executable, "-m", "qrevdiff", "validate-config", "--config",
                           str(CONFIGS / "quartic_kerr.ini")], capture_output=True, text=True)
    assert proc.returncode == 0 and "quartic-kerr-perturbation" in proc.stdout
