import json

import pytest

from hisoflow import cli, experiments
from hisoflow.experiments import Assertion


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_graph_print(capsys):
    code, out, _ = run(capsys, "graph", "--name", "fig1", "--print")
    assert code == 0
    assert "[[ 4 -1 -1 -1 -1]" in out
    assert "[-1  0 -1 -1  3]]" in out
    assert "lambda_bar = 0.315301" in out


def test_graph_from_edges(capsys):
    code, out, _ = run(capsys, "graph", "--edges", "1-2,2-3")
    assert code == 0 and "3 nodes, 2 edges" in out


def test_graph_errors(capsys):
    assert run(capsys, "graph", "--name", "nothing")[0] == 2
    assert run(capsys, "graph", "--nodes", "4", "--edges", "1-2,2-3")[0] == 2


def test_inverse_sum_command(capsys):
    code, out, _ = run(capsys, "lemma1", "--instances", "1000", "--points", "50")
    assert code == 0
    assert "1000 instances, min eigenvalue" in out
    assert out.count("[PASS]") == 2


def test_inverse_sum_command_failure_exit_code(capsys):
    # a negative tolerance demands a margin of 1000, which no instance has
    code, out, _ = run(capsys, "lemma1", "--instances", "20", "--points", "5", "--tol=-1e3")
    assert code == 1 and "[FAIL]" in out


def test_missing_config(capsys):
    code, _, err = run(capsys, "run", "--config", "missing.cfg")
    assert code == 2 and "missing.cfg" in err


def test_bad_flag_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["quartic", "--step", "abc"])
    assert exc.value.code == 2


def test_bad_override_is_config_error(capsys, tmp_path):
    assert run(capsys, "--out", str(tmp_path), "quartic", "--horizon", "-1")[0] == 2


def test_quartic_command(capsys, tmp_path):
    code, out, _ = run(capsys, "--out", str(tmp_path / "q"), "--no-plot", "quartic")
    assert code == 0
    assert "[FAIL]" not in out
    summary = json.loads((tmp_path / "q" / "summary.json").read_text())
    assert summary["seed"] == 1 and summary["passed"]


def test_flags_after_subcommand(capsys, tmp_path):
    code, out, _ = run(capsys, "quartic", "--seed", "4", "--out", str(tmp_path), "--no-plot")
    assert json.loads((tmp_path / "summary.json").read_text())["seed"] == 4
    assert "experiment quartic (seed 4)" in out


def test_run_config(capsys, tmp_path):
    cfg = tmp_path / "ring.ini"
    cfg.write_text(
        "[experiment]\nname = ring\nkind = distributed\nseed = 3\n"
        "[graph]\nedges = 1-2, 2-3, 3-4, 1-4\n"
        "[cost]\nfamily = quadratic\nn_agents = 4\n"
        "[solver]\nstep_policy = fixed\nstep = 0.001\nhorizon = 4\n")
    code, out, _ = run(capsys, "--out", str(tmp_path / "o"), "run", "--config", str(cfg))
    assert code == 0, out
    assert (tmp_path / "o" / "f_gap.svg").exists()
    assert (tmp_path / "o" / "trace_dhiso.csv").exists()


def test_injected_assertion_failure(monkeypatch, capsys, tmp_path):
    real = experiments.run_quartic

    def failing(cfg):
        report = real(cfg)
        report.assertions.append(Assertion("injected", "a", 1, "<", "b", 0, False))
        return report

    monkeypatch.setattr(experiments, "run_quartic", failing)
    code, out, _ = run(capsys, "--out", str(tmp_path), "--no-plot", "quartic")
    assert code == 1
    assert "[FAIL] injected" in out


def test_module_entry_point():
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "hisoflow", "graph", "--name", "k2"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "2 nodes, 1 edges" in r.stdout
