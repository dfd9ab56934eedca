import json
import subprocess
import sys
from pathlib import Path

import pytest

from varqc.cli import main
from varqc.config import parse_config
from varqc.errors import ConfigError
from varqc.runner import RunReport, resolve_threads, run

DEMO = Path(__file__).resolve().parents[1] / "configs" / "dirichlet_square.json"


def _write(tmp_path, **changes):
    cfg = json.loads(DEMO.read_text())
    cfg.update(changes)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_demo_passes(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["--config", str(DEMO), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "FAIL" not in text and "INCONCLUSIVE" not in text
    rep = RunReport.from_json((out / "report.json").read_text())
    assert rep.exit_code == 0
    assert {c["condition"] for c in rep.checks} >= {"weak_EL", "qc_interior", "qc_boundary", "necessity"}
    assert rep.environment["python"]
    assert (out / "traces" / "necessity.csv").exists()


def test_c0_flip_fails(tmp_path):
    path = _write(tmp_path, c0=0.6, checks=[{"name": "qc_interior"}])
    assert main(["--config", str(path), "--out", str(tmp_path / "o")]) == 1
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    (rec,) = rep["checks"]
    assert rec["status"] == "FAIL" and rec["margin"] < 0
    assert rec["certificate"]["sup_norm"] > 0


def test_unknown_integrand(tmp_path, capsys):
    path = _write(tmp_path, integrand={"name": "no_such"})
    assert main(["--config", str(path), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "integrand" in err and "no_such" in err
    assert not (tmp_path / "o").exists()


def test_syntax_error_location(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "domain": {"name": "square"},\n  "c0": ,\n}')
    assert main(["--config", str(path)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_schema_diagnostics():
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps({"domain": {"name": "square"}, "integrand": {"name": "dirichlet"}, "extra": 1}))
    assert any(loc == "extra" for loc, _ in info.value.diagnostics)
    with pytest.raises(ConfigError):
        parse_config(json.dumps({"domain": {}, "integrand": {"name": "dirichlet"}}))


def test_check_filter_keeps_labels(tmp_path):
    out = tmp_path / "o"
    assert main(["--config", str(DEMO), "--out", str(out), "--check", "hessian_qc", "--check", "weak_EL"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert [c["label"] for c in rep["checks"]] == ["00_weak_EL", "03_hessian_qc"]


def test_report_round_trip(tmp_path):
    rep = run(parse_config(DEMO.read_text()), tmp_path, threads=1, only=["cover", "growth"])
    again = RunReport.from_json(rep.to_json())
    assert again.to_json() == rep.to_json()
    assert again.margins() == rep.margins()


def test_threads_env(monkeypatch):
    monkeypatch.setenv("VARQC_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(2) == 2
    monkeypatch.setenv("VARQC_THREADS", "many")
    with pytest.raises(ConfigError):
        resolve_threads(None)
    monkeypatch.delenv("VARQC_THREADS")
    assert resolve_threads(None) is None


def test_thread_count_does_not_change_margins(tmp_path):
    cfg = parse_config(DEMO.read_text())
    a = run(cfg, tmp_path / "a", threads=1)
    b = run(cfg, tmp_path / "b", threads=4)
    assert json.dumps(a.margins()) == json.dumps(b.margins())


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "varqc", "--config", str(DEMO), "--out", str(tmp_path / "o"),
                           "--check", "cover"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "07_cover" in proc.stdout
