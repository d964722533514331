"""
Tests for the variance identities, estimator bounds and oracle checks
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from composition.exceptions import InputError
from composition.estimator import (
    all_pairs, anchor_from_batches, estimate_gradient, inner_from_batch, pair_gradient,
)
from composition.problem import (
    make_lcq, make_lcq_reference, make_mean_variance, make_nonconvex_synthetic,
)
from composition.sampling import IndexBatch, SamplingMode, cover_batch
from composition.verify import (
    FAIL, INFO, PASS, VarianceReport, conditional_bias, double_subset_variance,
    empirical_constant_violations, estimator_bias_enumeration, finite_diff_gradient,
    finite_diff_jacobian, minibatch_key, oracle_consistency, subset_variance_exact,
)


class TestSubsetVariance:
    def test_pair_single_draw(self):
        report = subset_variance_exact([1.0, -1.0], A=1)
        assert report.exact == pytest.approx(1.0)
        assert report.bound == pytest.approx(1.0)
        assert report.verdict == PASS

    def test_three_vectors_pairs(self):
        report = subset_variance_exact([2.0, -1.0, -1.0], A=2)
        assert report.exact == pytest.approx(0.5)
        assert report.details["formula"] == pytest.approx(0.5)
        assert report.samples == 3

    def test_full_subset_has_no_variance(self):
        report = subset_variance_exact([[1.0, 2.0], [-1.0, -2.0], [0.0, 0.0]], A=3)
        assert report.exact == pytest.approx(0.0)
        assert report.bound == 0.0
        assert report.passed

    def test_with_replacement(self):
        report = subset_variance_exact([3.0, -1.0, -2.0], A=2, mode=SamplingMode.WITH_REPLACEMENT)
        assert report.exact == pytest.approx((9 + 1 + 4) / 3 / 2)
        assert report.samples == 9

    def test_input_is_centred(self):
        shifted = subset_variance_exact([11.0, 9.0], A=1)
        assert shifted.exact == pytest.approx(1.0)

    @pytest.mark.parametrize("A", [0, 4])
    def test_bad_batch_size(self, A):
        with pytest.raises(InputError):
            subset_variance_exact([1.0, 0.0, -1.0], A=A)

    def test_monte_carlo_beyond_enumeration_limit(self):
        v = np.random.default_rng(0).standard_normal(40)
        report = subset_variance_exact(v, A=10, samples=2000, seed=1)
        assert report.monte_carlo
        assert report.sigma > 0
        assert report.passed

    @settings(max_examples=60, deadline=None)
    @given(values=st.lists(st.integers(-20, 20), min_size=1, max_size=6), data=st.data())
    def test_identity_without_replacement(self, values, data):
        A = data.draw(st.integers(1, len(values)))
        report = subset_variance_exact(values, A=A)
        assert report.exact == pytest.approx(report.details["formula"], rel=1e-10, abs=1e-12)
        assert report.passed

    @settings(max_examples=40, deadline=None)
    @given(values=st.lists(st.integers(-20, 20), min_size=1, max_size=5),
           A=st.integers(1, 4))
    def test_identity_with_replacement(self, values, A):
        report = subset_variance_exact(values, A=A, mode=SamplingMode.WITH_REPLACEMENT)
        assert report.exact == pytest.approx(report.details["formula"], rel=1e-10, abs=1e-12)


class TestDoubleSubset:
    def test_two_components_single_draw(self):
        report = double_subset_variance([1.0, 3.0], [1.0, -1.0], D=1)
        assert report.exact == pytest.approx(5.0)
        assert report.bound == pytest.approx(5.0)
        assert report.verdict == PASS

    def test_cover_is_exact(self):
        report = double_subset_variance([1.0, 3.0], [1.0, -1.0], D=2)
        assert report.exact == pytest.approx(0.0)
        assert report.bound == 0.0

    def test_decomposition(self):
        rng = np.random.default_rng(3)
        w, v = rng.standard_normal((4, 2, 3)), rng.standard_normal((4, 2))
        report = double_subset_variance(w, v, D=2, full_cover=False)
        d = report.details
        expected = (d["first_order_w"] + d["first_order_v"]) / 2 + d["second_order"] / 4
        assert report.exact == pytest.approx(expected, rel=1e-10)

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            double_subset_variance([1.0, 2.0, 3.0], [1.0, -1.0], D=1)

    def test_bad_D(self):
        with pytest.raises(InputError):
            double_subset_variance([1.0, 2.0], [1.0, -1.0], D=0)


class TestEstimatorBounds:
    def test_reference_reports_pass(self, reference_lcq):
        reports = estimator_bias_enumeration(reference_lcq, [1.0], [0.0], 1, 1, b=[1, 2])
        assert {"inner", "conditional_mean", "estimator", "minibatch",
                minibatch_key(1), minibatch_key(2)} == set(reports)
        assert all(r.verdict == PASS for r in reports.values())
        assert reports["minibatch"].exact == reports[minibatch_key(1)].exact
        assert reports[minibatch_key(2)].exact <= reports["estimator"].exact
        assert reports[minibatch_key(2)].details["b"] == 2

    def test_covers_have_no_error_at_snapshot(self, reference_lcq):
        reports = estimator_bias_enumeration(reference_lcq, [1.0], [1.0], 2, 2, b=4)
        for report in reports.values():
            assert report.exact == pytest.approx(0.0, abs=1e-12)

    def test_corrupted_constant_is_caught(self, reference_lcq):
        corrupted = reference_lcq.constants.with_values(H1=0.0)
        reports = estimator_bias_enumeration(reference_lcq, [1.0], [1.0], 1, 1,
                                             constants=corrupted)
        assert reports["inner"].exact == pytest.approx(1.0)
        assert reports["inner"].bound == 0.0
        assert reports["inner"].verdict == FAIL

    def test_estimated_constants_only_inform(self, small_lcq):
        constants = small_lcq.constants.with_values()
        constants.flags["H1"] = "estimated"
        reports = estimator_bias_enumeration(small_lcq, np.ones(2), np.zeros(2), 1, 1,
                                             constants=constants)
        assert all(r.verdict == INFO for r in reports.values())

    def test_duplicate_batch_sizes(self, reference_lcq):
        reports = estimator_bias_enumeration(reference_lcq, [1.0], [0.0], 1, 1, b=[2, 2])
        assert sorted(k for k in reports if k.startswith("minibatch_b")) == [minibatch_key(2)]

    @pytest.mark.parametrize("b", [0, []])
    def test_bad_batch_sizes(self, reference_lcq, b):
        with pytest.raises(InputError):
            estimator_bias_enumeration(reference_lcq, [1.0], [0.0], 1, 1, b=b)

    def test_monte_carlo_path(self):
        problem = make_nonconvex_synthetic(12, 2, 2, beta=0.5, seed=1)
        reports = estimator_bias_enumeration(problem, np.ones(2), np.zeros(2), 4, 4, b=2,
                                             samples=200)
        assert reports["estimator"].monte_carlo
        assert reports["estimator"].samples == 200


class TestConditionalBias:
    def test_covers_are_unbiased(self, small_lcq):
        everyone = np.arange(small_lcq.n)
        bias = conditional_bias(small_lcq, np.ones(2), np.zeros(2), everyone, everyone, everyone)
        np.testing.assert_allclose(bias, 0.0, atol=1e-10)

    def test_subsampled_anchor_is_biased(self, reference_lcq):
        everyone = np.arange(2)
        np.testing.assert_allclose(
            conditional_bias(reference_lcq, [1.0], [0.0], everyone, [1], [1]), [-8.0])
        np.testing.assert_allclose(
            conditional_bias(reference_lcq, [1.0], [0.0], everyone, [1], [0]), [4.0])


def _batch(indices):
    return IndexBatch(np.asarray(indices, dtype=int), SamplingMode.WITH_REPLACEMENT)


class TestReferenceHandValues:
    """Hand-evaluated quantities on f(x) = 4x^2 - 4x + 2 with G_1 = x, G_2 = 3x"""

    def test_anchor_gradient(self, reference_lcq):
        anchor = anchor_from_batches(reference_lcq, [0.0], _batch([0]), _batch([1]))
        np.testing.assert_allclose(anchor.g_anchor, [0.0])
        np.testing.assert_allclose(anchor.grad_anchor, [-4.0])
        same = anchor_from_batches(reference_lcq, [0.0], _batch([0]), _batch([0]))
        np.testing.assert_allclose(same.grad_anchor, [0.0])

    def test_inner_estimate(self, reference_lcq):
        anchor = anchor_from_batches(reference_lcq, [0.0], _batch([1]), _batch([1]))
        estimate = inner_from_batch(reference_lcq, [1.0], anchor, _batch([0]))
        np.testing.assert_allclose(estimate.value, [1.0])

    def test_pair_estimates_with_covers(self, reference_lcq):
        anchor = anchor_from_batches(reference_lcq, [0.0], cover_batch(2), cover_batch(2))
        estimate = inner_from_batch(reference_lcq, [1.0], anchor, cover_batch(2))
        np.testing.assert_allclose(anchor.grad_anchor, [-4.0])
        np.testing.assert_allclose(estimate.value, [2.0])
        np.testing.assert_allclose(
            estimate_gradient(reference_lcq, [1.0], estimate, anchor, 0, 0), [0.0], atol=1e-12)
        i_idx, j_idx = all_pairs(2)
        np.testing.assert_allclose(
            pair_gradient(reference_lcq, [1.0], estimate, anchor, i_idx, j_idx), [4.0])

    def test_minibatch_variances(self, reference_lcq):
        reports = estimator_bias_enumeration(reference_lcq, [1.0], [0.0], 1, 1, b=[1, 2, 4])
        assert reports["estimator"].exact == pytest.approx(60.0)
        for b, expected in ((1, 60.0), (2, 50.0), (4, 45.0)):
            assert reports[minibatch_key(b)].exact == pytest.approx(expected)


class TestOracles:
    def test_finite_difference_gradient(self, reference_lcq):
        np.testing.assert_allclose(finite_diff_gradient(reference_lcq, [1.0]), [4.0], rtol=1e-6)

    def test_finite_difference_jacobian(self, nonconvex_problem):
        x = np.linspace(-1.0, 1.0, 4)
        np.testing.assert_allclose(finite_diff_jacobian(nonconvex_problem, 3, x),
                                   nonconvex_problem.inner_jacobian(3, x), atol=1e-6)

    def test_bad_step(self, reference_lcq):
        with pytest.raises(InputError):
            finite_diff_gradient(reference_lcq, [1.0], step=0.0)

    @pytest.mark.parametrize("build", [
        make_lcq_reference,
        lambda: make_lcq(4, 2, 2, seed=3),
        lambda: make_nonconvex_synthetic(32, 4, 4, beta=0.5, seed=7),
        lambda: make_mean_variance(8, 3, lam=0.5, seed=2),
    ], ids=["lcq_reference", "lcq", "nonconvex", "mean_variance"])
    def test_consistency(self, build):
        worst = oracle_consistency(build(), points=100)
        assert set(worst) == {"inner_jacobian", "outer_gradient", "full_gradient"}
        assert max(worst.values()) < 1e-5

    def test_exact_constants_hold(self, small_lcq):
        assert empirical_constant_violations(small_lcq, points=50) == []

    def test_understated_constant_is_flagged(self, small_lcq):
        small_lcq.constants = small_lcq.constants.with_values(L_F=0.5)
        assert "L_F" in empirical_constant_violations(small_lcq, points=50)


class TestVarianceReport:
    def test_monte_carlo_slack(self):
        report = VarianceReport("x", empirical=1.2, bound=1.0, sigma=0.1, monte_carlo=True)
        assert report.verdict == PASS
        report.sigma = 0.05
        assert report.verdict == FAIL

    def test_suppressed(self):
        assert VarianceReport("x", 10.0, 1.0, exact=10.0, suppressed=True).passed
