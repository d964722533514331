"""
Tests for the lemma auditor and the sweep analyzer agents
"""

import math

import pytest

from agents.lemma_auditor import VERIFY_COLUMNS, LemmaAuditor, default_grid
from agents.sweep_analyzer import (
    SWEEP_COLUMNS, THREADS_ENV, SweepAnalyzer, SweepCell, worker_count,
)
from composition.exceptions import ScheduleError
from composition.problem import ProblemSpec, make_lcq
from composition.verify import FAIL, PASS

REFERENCE = ProblemSpec(kind="lcq_reference", n=2)


class TestDefaultGrid:
    @pytest.mark.parametrize("n,expected", [(1, [1]), (2, [1, 2]), (10, [1, 5, 10]),
                                            (7, [1, 4, 7])])
    def test_grid(self, n, expected):
        assert default_grid(n) == expected


class TestLemmaAuditor:
    def test_reference_instance_passes(self, reference_lcq):
        auditor = LemmaAuditor(reference_lcq)
        results = auditor.run_full_audit()
        assert auditor.all_passed
        assert results["score"] == 100
        assert results["grid"] == [1, 2]
        lemmas = {row["lemma"] for row in results["rows"]}
        assert {"subset_mean_without_replacement", "subset_mean_with_replacement",
                "double_subset", "inner", "conditional_mean", "estimator", "minibatch",
                "minibatch_factor", "full_cover_unbiased", "subsampled_anchor_bias",
                "oracle_inner_jacobian", "oracle_outer_gradient", "oracle_full_gradient",
                "exact_constants"} == lemmas
        assert all(set(row) == set(VERIFY_COLUMNS) for row in results["rows"])

    @pytest.mark.parametrize("n", [2, 3, 4, pytest.param(5, marks=pytest.mark.slow),
                                   pytest.param(6, marks=pytest.mark.slow)])
    def test_lcq_grid_fails_only_the_partial_anchor_product(self, n):
        auditor = LemmaAuditor(make_lcq(n, 2, 2, seed=n))
        results = auditor.run_full_audit()
        assert results["grid"] == default_grid(n)
        failures = [(row["lemma"], row["D"]) for row in results["failures"]]
        if n == 2:
            assert failures == []
            assert auditor.all_passed
        else:
            assert failures == [("double_subset", math.ceil(n / 2))]
            row = results["failures"][0]
            assert row["exact"] > row["bound"]

    def test_partial_anchor_product_exceeds_bound(self):
        auditor = LemmaAuditor(make_lcq(3, 2, 2, seed=3))
        auditor.check_double_subset()
        rows = {row["D"]: row for row in auditor.audit_results["rows"]}
        assert rows[1]["verdict"] == PASS and rows[3]["verdict"] == PASS
        assert rows[3]["exact"] == pytest.approx(0.0, abs=1e-12)
        assert rows[2]["verdict"] == FAIL
        assert rows[2]["exact"] == pytest.approx(0.487, abs=1e-3)
        assert rows[2]["bound"] == pytest.approx(0.246, abs=1e-3)

    def test_minibatch_rows_per_batch_size(self, reference_lcq):
        auditor = LemmaAuditor(reference_lcq)
        auditor.check_estimators()
        rows = [r for r in auditor.audit_results["rows"] if r["lemma"] == "minibatch"]
        assert len(rows) == 8
        assert {r["b"] for r in rows} == {1, 2}

    def test_understated_constant_fails(self, reference_lcq):
        reference_lcq.constants = reference_lcq.constants.with_values(H1=0.0)
        auditor = LemmaAuditor(reference_lcq, x_k=[1.0], x_tilde=[1.0])
        results = auditor.run_full_audit()
        assert not auditor.all_passed
        assert results["score"] < 100
        inner = [r for r in results["rows"] if r["lemma"] == "inner" and r["A"] == 1
                 and r["D"] == 1]
        assert inner[0]["verdict"] == FAIL
        assert inner[0]["exact"] == pytest.approx(1.0)

    def test_snapshot_at_iterate_has_zero_errors(self, reference_lcq):
        auditor = LemmaAuditor(reference_lcq, grid=[2], x_k=[1.0], x_tilde=[1.0])
        auditor.check_estimators()
        for row in auditor.audit_results["rows"]:
            assert row["empirical"] == pytest.approx(0.0, abs=1e-12)
            assert row["verdict"] == PASS

    def test_subsampled_anchor_bias_is_visible(self, reference_lcq):
        auditor = LemmaAuditor(reference_lcq)
        auditor.check_unbiasedness()
        rows = {r["lemma"]: r for r in auditor.audit_results["rows"]}
        assert rows["full_cover_unbiased"]["verdict"] == PASS
        assert rows["subsampled_anchor_bias"]["empirical"] == pytest.approx(8.0)

    def test_score_counts_only_scored_rows(self, reference_lcq):
        auditor = LemmaAuditor(reference_lcq)
        auditor.record("a", PASS)
        auditor.record("b", FAIL)
        auditor.record("c", "info")
        auditor.calculate_score()
        assert auditor.audit_results["score"] == 50
        assert len(auditor.audit_results["failures"]) == 1


class TestWorkerCount:
    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "3")
        assert worker_count() == 3
        monkeypatch.setenv(THREADS_ENV, "0")
        assert worker_count() == 0

    def test_falls_back_to_cores(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "many")
        assert worker_count() >= 1
        monkeypatch.delenv(THREADS_ENV)
        assert worker_count() >= 1


class TestSweepAnalyzer:
    def test_cell_order_skips_single_pair_minibatch(self):
        analyzer = SweepAnalyzer(ProblemSpec(kind="lcq", n=10, dim_x=2, dim_w=2, seed=1),
                                 algorithms=["scscg", "scscg_minibatch"], n_values=[10, 20],
                                 epsilons=[1e-3], batch_sizes=[1, 2], threads=0)
        cells = analyzer.cells()
        assert cells == [
            SweepCell("scscg", 10, 1e-3, 1), SweepCell("scscg", 20, 1e-3, 1),
            SweepCell("scscg_minibatch", 10, 1e-3, 1), SweepCell("scscg_minibatch", 10, 1e-3, 2),
            SweepCell("scscg_minibatch", 20, 1e-3, 1), SweepCell("scscg_minibatch", 20, 1e-3, 2),
        ]
        assert len(analyzer.sweep_results["skipped"]) == 2

    @pytest.mark.parametrize("algorithms,batch_sizes", [([], [1]), (["scscg"], [2])])
    def test_empty_grid(self, algorithms, batch_sizes):
        analyzer = SweepAnalyzer(REFERENCE, algorithms=algorithms, batch_sizes=batch_sizes,
                                 threads=0)
        with pytest.raises(ScheduleError):
            analyzer.cells()

    def test_reference_instance_pins_n(self):
        analyzer = SweepAnalyzer(REFERENCE, algorithms=["scscg"], n_values=[4, 8], threads=0)
        assert analyzer.n_values == [2]

    def test_smaller_target_needs_no_fewer_queries(self):
        analyzer = SweepAnalyzer(REFERENCE, algorithms=["scscg"], epsilons=[1e-4, 5e-5],
                                 repetitions=1, threads=0)
        results = analyzer.run_full_sweep()
        loose, tight = results["cells"]
        assert loose["metric"] == "dist_sq_opt"
        assert tight["median_queries"] >= loose["median_queries"]
        assert set(loose) == set(SWEEP_COLUMNS)

    def test_threads_do_not_change_results(self):
        kwargs = dict(algorithms=["scscg", "full_anchor"], epsilons=[1e-3], repetitions=2)
        sequential = SweepAnalyzer(REFERENCE, threads=0, **kwargs).run_full_sweep()
        threaded = SweepAnalyzer(REFERENCE, threads=2, **kwargs).run_full_sweep()
        assert sequential["cells"] == threaded["cells"]

    def test_unreached_target_is_censored_at_budget(self):
        analyzer = SweepAnalyzer(REFERENCE, algorithms=["scscg"], epsilons=[1e-12],
                                 repetitions=2, overrides={"K": 1, "S": 1}, threads=0)
        cell = analyzer.run_full_sweep()["cells"][0]
        assert cell["censored"] == 2
        assert cell["median_queries"] == cell["budget"] == 2 + 1 * (2 + 4)
        assert analyzer.sweep_results["censored_cells"] == 1

    def test_divergence_is_censored(self):
        analyzer = SweepAnalyzer(REFERENCE, algorithms=["scscg"], epsilons=[1e-4], repetitions=1,
                                 overrides={"eta": 100.0, "K": 50, "S": 1}, threads=0)
        assert analyzer.run_full_sweep()["cells"][0]["censored"] == 1

    def test_nonconvex_metric(self):
        spec = ProblemSpec(kind="nonconvex", n=32, dim_x=4, dim_w=4, seed=7, beta=0.5)
        analyzer = SweepAnalyzer(spec, algorithms=["scscg"], epsilons=[0.01], repetitions=1,
                                 threads=0)
        cell = analyzer.run_full_sweep()["cells"][0]
        assert cell["metric"] == "grad_norm_sq"
        assert cell["complexity_order"] > 0

    @pytest.mark.slow
    def test_larger_batches_do_not_cost_more(self):
        spec = ProblemSpec(kind="lcq", n=10, dim_x=3, dim_w=3, seed=7)
        analyzer = SweepAnalyzer(spec, algorithms=["scscg_minibatch"], epsilons=[1e-4],
                                 batch_sizes=[1, 2, 4], repetitions=20, mode="convex")
        cells = analyzer.run_full_sweep()["cells"]
        assert [cell["b"] for cell in cells] == [1, 2, 4]
        assert all(cell["censored"] == 0 for cell in cells)
        medians = [cell["median_queries"] for cell in cells]
        for smaller, larger in zip(medians, medians[1:]):
            assert larger <= 1.1 * smaller


class TestSweepLedger:
    def test_completed_runs_are_merged(self):
        analyzer = SweepAnalyzer(REFERENCE, algorithms=["scscg", "full_anchor"], epsilons=[1e-3],
                                 repetitions=2, threads=0)
        results = analyzer.run_full_sweep()
        budgets = sum(cell["budget"] for cell in results["cells"])
        assert results["ledger"]["paper_queries"] == 2 * budgets
        assert results["summary"]["total_queries"] == 2 * budgets
        assert results["summary"]["total_raw_queries"] == results["ledger"]["raw_queries"] > 0

    def test_merged_totals_do_not_depend_on_threads(self):
        kwargs = dict(algorithms=["scscg", "full_anchor"], epsilons=[1e-3], repetitions=2)
        sequential = SweepAnalyzer(REFERENCE, threads=0, **kwargs).run_full_sweep()
        threaded = SweepAnalyzer(REFERENCE, threads=2, **kwargs).run_full_sweep()
        assert sequential["ledger"] == threaded["ledger"]

    def test_diverged_runs_add_nothing(self):
        analyzer = SweepAnalyzer(REFERENCE, algorithms=["scscg"], epsilons=[1e-4], repetitions=1,
                                 overrides={"eta": 100.0, "K": 50, "S": 1}, threads=0)
        assert analyzer.run_full_sweep()["ledger"]["paper_queries"] == 0
