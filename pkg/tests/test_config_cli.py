import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from robustdoa.cli import main
from robustdoa.config import ConfigError, ProblemConfig
from robustdoa.expr import ExprError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = """
[plant]
n = 1
m = 1
fhat = "-sin(2*x1) - x1*u1 - 0.2*x1 - u1^2 + u1"
delta = "1 - exp(-0.5*(x1^2 + u1^2))"
w_cons = [-2,2],[-2,2]

[paving]
eps = 0.01

[lyapunov]
expr = "x1^2"

[sim]
count = 5
"""


def _write(tmp_path, text, name="c.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# -- configuration -----------------------------------------------------------


def test_parse_example_configs():
    cfg = ProblemConfig.load(CONFIGS / "example5.ini")
    assert (cfg.n, cfg.m, cfg.eps, cfg.budget, cfg.pso_eps) == (1, 1, 1e-3, 30, 2e-3)
    assert cfg.lyapunov == "x1^2" and cfg.use_core and cfg.policy == "fitted"
    q = ProblemConfig.load(CONFIGS / "example5_quartic.ini")
    L = q.lyapunov_fn()
    assert L(np.array([[1.0]]))[0] == pytest.approx(1.1286 + 2.3121 + 1.5327, abs=2e-3)


def test_round_trip_and_digest():
    cfg = ProblemConfig.from_text(BASE)
    again = ProblemConfig.from_text(cfg.to_text())
    assert again.to_text() == cfg.to_text() and again.digest() == cfg.digest()
    # comments and layout do not change the digest; values do
    assert ProblemConfig.from_text("# note\n" + BASE).digest() == cfg.digest()
    assert ProblemConfig.from_text(BASE.replace("0.01", "0.02")).digest() != cfg.digest()


@pytest.mark.parametrize(
    "edit, exc, match",
    [
        (lambda t: t.replace("[plant]", "[plnt]"), ConfigError, "missing \\[plant\\]"),
        (lambda t: t.replace("n = 1\n", ""), ConfigError, "missing n"),
        (lambda t: t.replace("eps = 0.01", "eps = -1"), ConfigError, "eps must be positive"),
        (lambda t: t.replace("eps = 0.01", "eps = abc"), ConfigError, "\\[paving\\] eps"),
        (lambda t: t + "policy = greedy\n", ConfigError, "policy"),
        (lambda t: t.replace("- u1^2", "- u2^2"), ExprError, "u2 out of range"),
        (lambda t: t.replace('"x1^2"', '"x1^2"\nd = 2\nP = 1 0; 0 1'), ConfigError, "either expr"),
        (lambda t: t + "region = [0,1\n", ConfigError, "region"),
    ],
)
def test_config_errors(edit, exc, match):
    with pytest.raises(exc, match=match):
        ProblemConfig.from_text(edit(BASE))


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read config"):
        ProblemConfig.load("/nonexistent/c.ini")


# -- command line ------------------------------------------------------------


def test_malformed_expression_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, BASE.replace("sin(2*x1)", "sin(2*x1"))
    out = tmp_path / "out"
    assert main(["rnis", "-c", cfg, "-o", str(out)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: line 1, column")
    assert not out.exists() or not any(out.iterdir())


def test_missing_config_argument_exits_2(capsys):
    assert main(["rnis"]) == 2
    assert "needs -c" in capsys.readouterr().err


def test_rnis_writes_projection(tmp_path, capsys):
    cfg = _write(tmp_path, BASE)
    out = tmp_path / "out"
    assert main(["rnis", "-c", cfg, "-o", str(out)]) == 0
    run = Path(capsys.readouterr().out.strip())
    assert run.parent == out and run.name.startswith("rnis-")
    proj = (run / "projection.txt").read_text().splitlines()
    assert proj and all(line.startswith("[") for line in proj)
    man = json.loads((run / "manifest.json").read_text())
    assert man["command"] == "rnis" and man["eps"] == 0.01 and man["lyapunov"] == "x1^2"
    assert man["artifacts"] == sorted(p.name for p in run.iterdir())
    assert man["config_sha256"] == ProblemConfig.load(cfg).digest()
    assert man["counts"]["in_boxes"] > 0 and "X0" in man
    assert ProblemConfig.from_text((run / "config.ini").read_text()).digest() == man["config_sha256"]
    # no stray temporary directories
    assert [p.name for p in out.iterdir()] == [run.name]


def test_cli_overrides_change_the_run(tmp_path, capsys):
    cfg = _write(tmp_path, BASE)
    assert main(["pave", "-c", cfg, "-o", str(tmp_path), "--eps", "0.05"]) == 0
    run = Path(capsys.readouterr().out.strip())
    assert json.loads((run / "manifest.json").read_text())["eps"] == 0.05


def test_failed_run_leaves_no_artifacts(tmp_path, capsys):
    cfg = _write(tmp_path, BASE + "\n[controller]\ncore = false\n")
    out = tmp_path / "out"
    assert main(["synth", "-c", cfg, "-o", str(out)]) == 1
    assert "core = true" in capsys.readouterr().err
    assert list(out.iterdir()) == []


def test_synth_simulate_and_report(tmp_path, capsys):
    cfg = _write(tmp_path, BASE)
    out = tmp_path / "out"
    assert main(["synth", "-c", cfg, "-o", str(out)]) == 0
    synth = Path(capsys.readouterr().out.strip())
    assert (synth / "verification.txt").read_text().startswith("PASS")
    assert (synth / "controller.txt").read_text().startswith("method pchip")
    assert main(["simulate", "-c", cfg, "-o", str(out)]) == 0
    sim = Path(capsys.readouterr().out.strip())
    rows = (sim / "trajectories.csv").read_text().splitlines()
    assert rows[0] == "run,k,x1,u1,e1,L"
    assert "converged 1.000" in (sim / "summary.txt").read_text()
    assert main(["report", "-o", str(out)]) == 0
    table = capsys.readouterr().out
    assert "| x1^2 | synth |" in table and "| x1^2 | simulate |" in table
    assert (out / "report.md").read_text() == table


def test_report_without_runs_fails(tmp_path, capsys):
    assert main(["report", "-o", str(tmp_path)]) == 1
    assert "no runs" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path, BASE.replace("n = 1", "n = x"))
    r = subprocess.run([sys.executable, "-m", "robustdoa", "pave", "-c", cfg, "-o", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 2 and r.stderr.startswith("error:")
