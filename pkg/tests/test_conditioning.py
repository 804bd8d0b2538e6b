"""Tests for condition-number bounds, concentration and spectra."""

import math

import numpy as np
import pytest

from skipstack.conditioning import (
    bernstein_bound,
    bernstein_coverage_test,
    binomial_tail_probability,
    condition_number,
    corollary1_lower,
    coverage_experiment,
    spectrum_curve,
    theorem1_bounds,
    theorem2_bounds,
)
from skipstack.features import SkipSchedule, extract_series_descriptors, mifs_stack
from skipstack.latent import new_model
from skipstack.streams import stream


class TestConditionNumber:
    def test_isotropic_gram(self):
        report = condition_number(np.eye(2))
        assert report.beta_empirical == 1.0

    def test_diagonal_gram(self):
        report = condition_number(np.diag([2.0, 1.0]))
        assert report.beta_empirical == pytest.approx(4.0, abs=1e-12)
        assert report.lambda_max >= report.lambda_min >= 0

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        p = rng.normal(size=(5, 40))
        a = condition_number(p).beta_empirical
        b = condition_number(3.7 * p).beta_empirical
        assert a == pytest.approx(b, rel=1e-10)

    def test_rank_deficient_flags_infinity(self):
        p = np.zeros((3, 10))
        p[0, 0] = 1.0
        assert math.isinf(condition_number(p).beta_empirical)
        assert math.isinf(condition_number(np.zeros((2, 5))).beta_empirical)

    def test_too_few_columns_rejected(self):
        with pytest.raises(ValueError, match="rank-deficient by construction"):
            condition_number(np.ones((4, 3)))

    def test_beta_at_least_one(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            p = rng.normal(size=(4, 30))
            assert condition_number(p).beta_empirical >= 1.0


class TestTheorem1Bounds:
    def test_delta_tau_oracle(self):
        # 2 sqrt(2 * 0.001 * ln 80) with k=2, T=1000, c=0, delta=0.05
        r = theorem1_bounds(1.0, 1.0, 0.0, 0.5, 2, 1000, 0.05)
        assert r.delta_tau == pytest.approx(0.18723304483287945, abs=1e-15)
        assert r.delta_tau == pytest.approx(0.18723, abs=1e-5)

    def test_single_frequency_sandwich_collapses(self):
        r = theorem1_bounds(2.0, 2.0, 0.0, 0.5, 2, 10**12, 0.05)
        assert r.bound_upper == pytest.approx(1.0, abs=1e-3)
        assert r.bound_lower == pytest.approx(1.0, abs=1e-3)

    def test_vacuous_regime_flags_infinity(self):
        # exp(-gamma_k / tau) = exp(-800) is far below delta_tau
        r = theorem1_bounds(1.0, 8.0, 0.1, 0.01, 4, 2000, 0.1)
        assert math.isinf(r.bound_upper)
        assert r.bound_lower == 1.0

    def test_lower_at_most_upper_when_finite(self):
        r = theorem1_bounds(7.5e-5, 6e-4, 0.1, 1 / 2000, 4, 2000, 0.1)
        assert 1.0 <= r.bound_lower <= r.bound_upper < math.inf
        assert r.bound_lower == pytest.approx(1.5081562484226083, rel=1e-12)
        assert r.bound_upper == pytest.approx(10.90557881839544, rel=1e-12)

    def test_sample_budget_proviso(self):
        with pytest.raises(ValueError, match="required minimum"):
            theorem1_bounds(1.0, 2.0, 0.0, 0.5, 50, 10, 1e-6)

    def test_delta_tau_monotonicity(self):
        base = theorem1_bounds(1.0, 1.0, 0.0, 0.5, 4, 1000, 0.05).delta_tau
        more_samples = theorem1_bounds(1.0, 1.0, 0.0, 0.5, 4, 4000, 0.05).delta_tau
        more_signals = theorem1_bounds(1.0, 1.0, 0.0, 0.5, 8, 1000, 0.05).delta_tau
        tighter = theorem1_bounds(1.0, 1.0, 0.0, 0.5, 4, 1000, 0.01).delta_tau
        assert more_samples < base
        assert more_signals > base
        assert tighter > base

    def test_bad_confidence_rejected(self):
        with pytest.raises(ValueError, match="delta"):
            theorem1_bounds(1.0, 2.0, 0.0, 0.5, 2, 1000, 0.0)


class TestCorollary1:
    def test_zero_exponent(self):
        b = corollary1_lower(0, 1.0, 0.5, 0.3)
        assert b.exponential == b.polynomial == pytest.approx(1.3)

    def test_exponential_oracle(self):
        b = corollary1_lower(3, 1.0, 1.0, 0.0)
        assert b.exponential == pytest.approx(20.085536923187664, rel=1e-12)
        assert b.polynomial == pytest.approx(8.0, rel=1e-12)

    @pytest.mark.parametrize("m", [0, 1, 2, 5])
    @pytest.mark.parametrize("ratio", [0.1, 0.5, 1.0, 2.0])
    def test_exponential_dominates_polynomial(self, m, ratio):
        b = corollary1_lower(m, ratio, 1.0, 0.2)
        assert b.exponential >= b.polynomial

    def test_negative_m_rejected(self):
        with pytest.raises(ValueError, match="m must"):
            corollary1_lower(-1, 1.0, 1.0, 0.0)


class TestTheorem2Bounds:
    def test_one_level_reduces_to_fixed_skip(self):
        g1, gk = 7.5e-5, 6e-4
        a = theorem1_bounds(g1, gk, 0.1, 1 / 2000, 4, 2000, 0.1)
        b = theorem2_bounds([g1, g1, gk, gk], 0.1, SkipSchedule(base_tau=1 / 2000, levels=0), 0.1)
        assert b.bound_upper == pytest.approx(a.bound_upper, rel=1e-12)
        assert b.bound_lower == pytest.approx(a.bound_lower, rel=1e-12)
        assert b.delta_tau == pytest.approx(a.delta_tau, rel=1e-12)

    def test_stacked_radius_beats_every_single_level(self):
        sched = SkipSchedule(base_tau=1 / 1000, levels=1)  # budgets 1000 + 500
        stacked = theorem2_bounds([0.001, 0.004], 0.0, sched, 0.05).delta_tau
        for level in range(2):
            single = theorem1_bounds(
                0.001, 0.004, 0.0, sched.tau(level), 2, sched.budget(level), 0.05
            ).delta_tau
            assert stacked < single

    def test_stacking_definite_where_fixed_skip_vacuous(self):
        gammas = [0.0003, 0.0003, 0.0024, 0.0024]
        fixed = theorem1_bounds(gammas[0], gammas[-1], 0.1, 0.001, 4, 1000, 0.1)
        sched = SkipSchedule(base_tau=0.001, levels=3)
        stacked = theorem2_bounds(gammas, 0.1, sched, 0.1)
        assert math.isinf(fixed.bound_upper)
        assert stacked.bound_upper < math.inf

    def test_budget_proviso_on_total(self):
        sched = SkipSchedule(base_tau=0.5, levels=1)  # budgets 2 + 1
        with pytest.raises(ValueError, match="required minimum"):
            theorem2_bounds([1.0] * 40, 0.0, sched, 1e-9)


class TestBernstein:
    def test_bound_oracle(self):
        # sqrt(2 ln 80) + (ln 80)/3 at B=1, |ES|=1, p=2, delta=0.05
        value = bernstein_bound(1.0, 1.0, 2, 7, 0.05)
        assert value == pytest.approx(4.42108991949289, rel=1e-12)
        assert value == pytest.approx(4.4211, abs=1e-3)

    def test_degenerate_confidence_gives_zero(self):
        assert bernstein_bound(1.0, 1.0, 2, 7, 4.0) == 0.0

    def test_homogeneity_in_b(self):
        log_term = math.log(2 * 2 / 0.05)
        first = math.sqrt(2 * 1.0 * 1.0 * log_term)
        second = (1.0 / 3.0) * log_term
        doubled = bernstein_bound(2.0, 1.0, 2, 7, 0.05)
        assert doubled == pytest.approx(math.sqrt(2) * first + 2 * second, rel=1e-12)

    def test_bound_decreases_with_delta(self):
        bounds = [bernstein_bound(1.0, 5.0, 4, 100, d) for d in (0.01, 0.05, 0.2)]
        assert bounds[0] > bounds[1] > bounds[2]

    def test_coverage_deterministic_vectors(self):
        # p=1 makes every summand exactly B, so S = ES in every trial
        rate = bernstein_coverage_test(1, 50, 2.0, 0.1, trials=100, seed=0)
        assert rate == 0.0

    def test_coverage_rademacher(self):
        rate = bernstein_coverage_test(4, 500, 4.0, 0.1, trials=200, seed=5)
        assert rate <= 0.1

    def test_too_few_trials_rejected(self):
        with pytest.raises(ValueError, match="trials"):
            bernstein_coverage_test(2, 10, 1.0, 0.1, trials=50, seed=0)


class TestSpectrumCurve:
    def test_isotropic_matrix_is_flat(self):
        matrix = np.hstack([np.eye(10), np.zeros((10, 3))])
        curve = spectrum_curve(matrix)
        np.testing.assert_allclose(curve.sigmas, 1.0, atol=1e-12)

    def test_rank_one_matrix(self):
        u = np.arange(1.0, 7.0)
        v = np.ones(15)
        curve = spectrum_curve(np.outer(u, v))
        assert curve.sigmas[0] == 1.0
        assert np.all(curve.sigmas[1:] < 1e-7)

    def test_first_entry_one_and_non_increasing(self):
        rng = np.random.default_rng(2)
        curve = spectrum_curve(rng.normal(size=(12, 60)))
        assert curve.sigmas[0] == 1.0
        assert np.all(np.diff(curve.sigmas) <= 1e-12)
        assert curve.sigmas.size == 10

    def test_feature_matrix_dispatch(self):
        model = new_model(k=4, d=8, gammas=[0.001, 0.002, 0.004, 0.008], c=0.0, sigma=0.01, seed=3)
        fm = mifs_stack(model, SkipSchedule(base_tau=1 / 50, levels=1), seed=4, observe=True)
        curve = spectrum_curve(fm, level_label="L=1")
        assert curve.level_label == "L=1"
        assert curve.sigmas.size == min(10, model.d)

    def test_descriptor_dispatch(self):
        series = np.random.default_rng(5).normal(size=(80, 3))
        ds = extract_series_descriptors(series, SkipSchedule.from_frames(80, 1), window=4)
        curve = spectrum_curve(ds)
        assert curve.sigmas.size == 10

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError, match="all-zero"):
            spectrum_curve(np.zeros((4, 20)))

    def test_too_few_columns_rejected(self):
        with pytest.raises(ValueError, match="10 feature columns"):
            spectrum_curve(np.eye(5))


class TestCoverageExperiment:
    def test_fixed_skip_coverage(self):
        model = new_model(
            k=4, d=4, gammas=[0.0015, 0.0015, 0.012, 0.012], c=0.1, sigma=0.0, seed=0
        )
        summary = coverage_experiment(model, 0.01, 0.1, 100, seed=7, t_samples=2000)
        assert summary.coverage >= 0.9
        assert summary.bound_lower < summary.mean_beta < summary.bound_upper
        # observed failures must be plausible under a 90% success rate
        assert binomial_tail_probability(int(summary.within.sum()), 100, 0.9) > 0.01

    def test_singular_trials_need_vacuous_upper(self):
        # flip probabilities underflow here, so every trial is singular and
        # only the infinite upper bound covers it
        model = new_model(k=4, d=4, gammas=[1.0, 1.0, 8.0, 8.0], c=0.1, sigma=0.0, seed=0)
        summary = coverage_experiment(model, 0.01, 0.1, 100, seed=8, t_samples=2000)
        assert math.isinf(summary.bound_upper)
        assert np.all(np.isinf(summary.betas))
        assert summary.coverage == 1.0

    def test_schedule_route_and_reduction(self):
        g1 = 0.00125
        model = new_model(
            k=4, d=4, gammas=[g1, g1, 4 * g1, 4 * g1], c=0.1, sigma=0.0, seed=0
        )
        fixed = coverage_experiment(model, 1 / 400, 0.1, 100, seed=9)
        sched = SkipSchedule(base_tau=1 / 400, levels=3)
        stacked = coverage_experiment(model, sched, 0.1, 100, seed=9)
        assert stacked.mean_beta < fixed.mean_beta
        assert stacked.var_beta < fixed.var_beta

    def test_determinism(self):
        model = new_model(k=2, d=2, gammas=[0.002, 0.008], c=0.0, sigma=0.0, seed=0)
        a = coverage_experiment(model, 0.01, 0.1, 100, seed=11)
        b = coverage_experiment(model, 0.01, 0.1, 100, seed=11)
        assert np.array_equal(a.betas, b.betas)

    def test_too_few_trials_rejected(self):
        model = new_model(k=2, d=2, gammas=[0.002, 0.008], c=0.0, sigma=0.0, seed=0)
        with pytest.raises(ValueError, match="trials"):
            coverage_experiment(model, 0.01, 0.1, 50, seed=0)


class TestBinomialTail:
    def test_all_failures(self):
        assert binomial_tail_probability(0, 10, 0.5) == pytest.approx(2.0**-10, rel=1e-12)

    def test_certain_event(self):
        assert binomial_tail_probability(10, 10, 0.5) == pytest.approx(1.0)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            binomial_tail_probability(11, 10, 0.5)
