"""
End-to-end tests of the command-line interface
"""

import pytest
from click.testing import CliRunner

from agents.lemma_auditor import VERIFY_COLUMNS
from agents.sweep_analyzer import SWEEP_COLUMNS, THREADS_ENV
from composition import __version__
from composition.ledger import epoch_cost
from src.orchestrator import EXIT_DIVERGED, EXIT_ERROR, EXIT_OK, main
from src.runconfig.questionnaire import Questionnaire
from tests.conftest import read_csv, write_config


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(main, [str(arg) for arg in args])


class TestVersion:
    def test_version(self, runner):
        result = invoke(runner, "--version")
        assert result.exit_code == 0
        assert __version__ in result.output


class TestRun:
    def test_reference_run(self, runner, tmp_path):
        config = write_config(tmp_path / "run.conf", problem__kind="lcq_reference")
        out = tmp_path / "trace.csv"
        result = invoke(runner, "run", "--config", config, "--out", out)
        assert result.exit_code == EXIT_OK, result.output
        assert "RUN SUMMARY" in result.output
        header, rows = read_csv(out)
        assert "# effective.K=1215 [corollary]" in header
        assert "# problem.kind=lcq_reference [file]" in header
        assert len(rows) == 9
        assert int(rows[-1]["paper_queries"]) == 9 * epoch_cost(2, 1215, 2, 1)
        assert float(rows[-1]["dist_sq_opt"]) <= 1e-4

    def test_seed_flag_is_recorded(self, runner, tmp_path):
        config = write_config(tmp_path / "run.conf", schedule__K=20, schedule__S=1)
        out = tmp_path / "trace.csv"
        result = invoke(runner, "run", "--config", config, "--out", out, "--seed", 5)
        assert result.exit_code == EXIT_OK, result.output
        header, _ = read_csv(out)
        assert "# run.master_seed=5 [flag]" in header
        assert "# seed=5" in header

    def test_repetitions_write_one_trace_each(self, runner, tmp_path):
        config = write_config(tmp_path / "run.conf", schedule__K=20, schedule__S=2,
                              run__repetitions=2, run__fixed_seed=True)
        result = invoke(runner, "run", "--config", config, "--out", tmp_path / "trace.csv")
        assert result.exit_code == EXIT_OK, result.output
        first = read_csv(tmp_path / "trace_rep0.csv")
        second = read_csv(tmp_path / "trace_rep1.csv")
        assert first == second
        assert "# seed=0" in first[0]

    def test_iteration_trace(self, runner, tmp_path):
        config = write_config(tmp_path / "run.conf", schedule__K=4, schedule__S=1,
                              run__iteration_trace=True)
        out = tmp_path / "trace.csv"
        assert invoke(runner, "run", "--config", config, "--out", out).exit_code == EXIT_OK
        _, rows = read_csv(out)
        assert len(rows) == 5

    def test_nonconvex_run(self, runner, tmp_path):
        config = write_config(tmp_path / "run.conf", problem__kind="nonconvex", problem__n=32,
                              problem__dim_x=4, problem__dim_w=4, schedule__epsilon=0.01,
                              algorithm="scscg_minibatch", schedule__b=2, schedule__S=3)
        out = tmp_path / "trace.csv"
        result = invoke(runner, "run", "--config", config, "--out", out)
        assert result.exit_code == EXIT_OK, result.output
        header, rows = read_csv(out)
        assert "# effective.mode=nonconvex [default]" in header
        assert rows[0]["dist_sq_opt"] == ""

    def test_divergence_exit_code(self, runner, tmp_path):
        config = write_config(tmp_path / "run.conf", schedule__eta=100.0, schedule__K=50,
                              schedule__S=1)
        result = invoke(runner, "run", "--config", config, "--out", tmp_path / "trace.csv")
        assert result.exit_code == EXIT_DIVERGED
        assert "diverged" in result.output
        assert not (tmp_path / "trace.csv").exists()

    def test_config_error_exit_code(self, runner, tmp_path):
        config = tmp_path / "bad.conf"
        config.write_text("problem.n=4\nproblem.size=3\n", encoding="utf-8")
        result = invoke(runner, "run", "--config", config)
        assert result.exit_code == EXIT_ERROR
        assert "line 2" in result.output

    def test_missing_config(self, runner, tmp_path):
        result = invoke(runner, "run", "--config", tmp_path / "nope.conf")
        assert result.exit_code == EXIT_ERROR

    def test_schedule_error_exit_code(self, runner, tmp_path):
        config = write_config(tmp_path / "run.conf", problem__kind="nonconvex", problem__n=8,
                              problem__dim_x=2, problem__dim_w=2, schedule__mode="convex")
        result = invoke(runner, "run", "--config", config, "--out", tmp_path / "trace.csv")
        assert result.exit_code == EXIT_ERROR
        assert "mu > 0" in result.output

    def test_seed_out_of_range(self, runner):
        assert invoke(runner, "run", "--seed", 2 ** 64).exit_code == 2


class TestVerify:
    def test_reference_passes(self, runner, tmp_path):
        config = write_config(tmp_path / "verify.conf", verify__oracle_points=20)
        out = tmp_path / "verify.csv"
        result = invoke(runner, "verify", "--config", config, "--out", out)
        assert result.exit_code == EXIT_OK, result.output
        header, rows = read_csv(out)
        assert header[0] == "# verification"
        assert list(rows[0]) == list(VERIFY_COLUMNS)
        assert {row["verdict"] for row in rows} == {"pass"}

    def test_corrupted_constant_fails(self, runner, tmp_path):
        config = write_config(tmp_path / "verify.conf", constants__H1=0, verify__x_k="[1.0]",
                              verify__x_tilde="[1.0]", verify__oracle_points=20)
        out = tmp_path / "verify.csv"
        result = invoke(runner, "verify", "--config", config, "--out", out)
        assert result.exit_code == EXIT_ERROR
        assert "Failed checks" in result.output
        _, rows = read_csv(out)
        failing = [row for row in rows if row["verdict"] == "fail"]
        assert any(row["lemma"] == "inner" and row["A"] == "1" and row["D"] == "1"
                   for row in failing)


class TestSweep:
    def test_sweep_summary(self, runner, tmp_path, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "0")
        config = write_config(tmp_path / "sweep.conf", sweep__algorithms="[scscg, full_anchor]",
                              sweep__epsilon="[1e-3]", sweep__repetitions=1)
        out = tmp_path / "sweep.csv"
        result = invoke(runner, "sweep", "--config", config, "--out", out)
        assert result.exit_code == EXIT_OK, result.output
        header, rows = read_csv(out)
        assert header[0] == "# sweep"
        assert list(rows[0]) == list(SWEEP_COLUMNS)
        assert [row["algorithm"] for row in rows] == ["scscg", "full_anchor"]

    def test_empty_grid(self, runner, tmp_path, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "0")
        config = write_config(tmp_path / "sweep.conf", sweep__algorithms="[scscg]",
                              sweep__b="[2]")
        result = invoke(runner, "sweep", "--config", config, "--out", tmp_path / "sweep.csv")
        assert result.exit_code == EXIT_ERROR


class TestConfigure:
    def test_defaults_with_generated_instance(self, runner, tmp_path):
        out = tmp_path / "experiment.conf"
        answers = "2\n12\n" + "\n" * 8
        result = runner.invoke(main, ["configure", "--out", str(out)], input=answers)
        assert result.exit_code == EXIT_OK, result.output
        config = Questionnaire().load(str(out))
        assert config["problem.kind"] == "lcq"
        assert config["problem.n"] == 12
        assert config["schedule.epsilon"] == pytest.approx(1e-4)

    def test_cancelled(self, runner, tmp_path):
        out = tmp_path / "experiment.conf"
        result = runner.invoke(main, ["configure", "--out", str(out)], input="")
        assert result.exit_code == EXIT_ERROR
        assert not out.exists()
