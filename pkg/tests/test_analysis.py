import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluidfl.analysis import (alternative_second_moment, empirical_second_moment,
                              estimator_sigma, expected_second_moment,
                              keep_probabilities, probability_mass_bound,
                              rate_from_slack, sample_bounded_instance,
                              slack_identity_residual)
from fluidfl.errors import DataError, InfeasibleRateError, RateError, SlackError


class TestKeepProbabilities:
    def test_all_top_k(self):
        assert keep_probabilities([3, 2, 1], 3, 1.0).tolist() == [1, 1, 1]

    def test_tail_formula(self):
        p = keep_probabilities([3, 2, 1], 1, 4.0)
        assert np.allclose(p, [1.0, 0.5, 0.25])

    def test_infeasible_rate(self):
        with pytest.raises(InfeasibleRateError):
            keep_probabilities([3, 2, 1], 1, 1.5)

    def test_requires_sorted_input(self):
        with pytest.raises(DataError):
            keep_probabilities([1, 2, 3], 1, 4.0)

    def test_requires_positive_rate(self):
        with pytest.raises(RateError):
            keep_probabilities([3, 2, 1], 1, 0.0)

    def test_alternative_model(self):
        p = keep_probabilities([3, 2, 1], 1, 0.25, alternative=True)
        assert np.allclose(p, [1.0, 0.5, 0.25])

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.floats(min_value=0.0, max_value=1.0),
                    min_size=2, max_size=30),
           st.data())
    def test_probabilities_monotone_in_magnitude(self, values, data):
        g = np.sort(np.array(values))[::-1]
        k = data.draw(st.integers(min_value=0, max_value=len(values)))
        rate = float(max(g.max(), 0.1) * data.draw(
            st.floats(min_value=1.0, max_value=5.0)))
        p = keep_probabilities(g, k, rate)
        assert np.all(np.diff(p) <= 1e-15)  # |g_i| >= |g_j| implies p_i >= p_j


class TestRateFromSlack:
    def test_hand_computed_instance(self):
        # g = [2, 1], k = 1, eps = 1: r = 1 / (2 * 5 - 4) = 1/6
        assert rate_from_slack([2, 1], 1, 1.0) == pytest.approx(1 / 6)

    def test_degenerate_zero_tail(self):
        assert rate_from_slack([3.0, 0.0, 0.0], 1, 0.5) == 0.0

    def test_zero_vector_rejected(self):
        with pytest.raises(SlackError):
            rate_from_slack([0.0, 0.0], 1, 0.5)

    def test_self_consistency_on_random_instances(self):
        rng = np.random.default_rng(17)
        worst = 0.0
        for _ in range(100):
            m = int(rng.integers(3, 60))
            g = np.sort(np.abs(rng.normal(size=m)))[::-1]
            k = int(rng.integers(0, m - 1))
            eps = float(rng.uniform(0.05, 2.0))
            r = rate_from_slack(g, k, eps)
            if r == 0.0:
                continue
            worst = max(worst, abs(slack_identity_residual(g, k, r, eps)))
        assert worst < 1e-9


class TestMassBound:
    def test_keep_everything(self):
        # k = m keeps every element: sum(p) = m and the bound is m(1+eps),
        # checked directly because the slack rate is degenerate there
        g = np.array([3.0, 2.0, 1.0])
        p = keep_probabilities(g, 3, 1.0)
        assert p.sum() == 3.0
        assert p.sum() <= 3 * (1 + 0.5)

    def test_published_probabilities_infeasible_on_heavy_tail(self):
        # g=[2,1], k=1, eps=1 gives r=1/6, so the tail probability would be
        # |1|/r = 6 > 1: the published p-model rejects this instance
        with pytest.raises(InfeasibleRateError):
            probability_mass_bound([2, 1], 1, 1.0)

    def test_alternative_model_holds_on_that_instance(self):
        # the draft p-model keeps p = r|g| = 1/6 <= 1 and the bound holds:
        # sum(p) = 1 + 1/6 <= k(1+eps) = 2
        check = probability_mass_bound([2, 1], 1, 1.0, alternative=True)
        assert check.rate == pytest.approx(1 / 6)
        assert check.sum_p == pytest.approx(7 / 6)
        assert check.bound == pytest.approx(2.0)
        assert check.holds

    def test_bound_holds_across_sampled_regime(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            g, k, eps = sample_bounded_instance(rng)
            check = probability_mass_bound(g, k, eps)
            assert check.holds
            assert check.sum_p <= check.bound + 1e-12

    def test_sampler_respects_fixed_shape(self):
        rng = np.random.default_rng(9)
        g, k, eps = sample_bounded_instance(rng, m=50, k=5, eps=0.3)
        assert g.size == 50 and k == 5 and eps == 0.3
        assert np.all(np.diff(np.abs(g)) <= 1e-15)


class TestEmpiricalSecondMoment:
    def test_certain_keep_is_exact(self):
        g = np.array([1.5, -2.0, 0.5])
        p = np.ones(3)
        estimate = empirical_second_moment(g, p, trials=1, seed=0)
        assert estimate == float((g ** 2).sum())

    def test_single_element(self):
        # g = 2 kept with p = 0.25: expectation 4 * 0.25 = 1
        estimate = empirical_second_moment([2.0], [0.25], trials=200_000, seed=3)
        assert estimate == pytest.approx(1.0, abs=0.05)

    def test_half_probability_pair(self):
        g = np.array([1.0, 1.0])
        p = np.array([0.5, 0.5])
        trials = 100_000
        estimate = empirical_second_moment(g, p, trials=trials, seed=11)
        sigma = estimator_sigma(g, p, trials)
        assert abs(estimate - 1.0) <= 3 * sigma

    def test_converges_to_expected_second_moment(self):
        rng = np.random.default_rng(21)
        g = np.sort(np.abs(rng.normal(size=12)))[::-1]
        p = keep_probabilities(g, 3, float(np.abs(g).max() * 2))
        trials = 50_000
        estimate = empirical_second_moment(g, p, trials=trials, seed=9)
        expected = expected_second_moment(g, p)
        assert abs(estimate - expected) <= 3 * estimator_sigma(g, p, trials)

    def test_rescaled_estimator_matches_draft_moment(self):
        g = np.array([1.0, 0.5, 0.25])
        p = np.array([1.0, 0.5, 0.5])
        trials = 200_000
        estimate = empirical_second_moment(g, p, trials=trials, seed=4,
                                           rescaled=True)
        expected = alternative_second_moment(g, p)
        sigma = estimator_sigma(g, p, trials, rescaled=True)
        assert abs(estimate - expected) <= 3 * sigma

    def test_requires_trials(self):
        with pytest.raises(DataError):
            empirical_second_moment([1.0], [1.0], trials=0, seed=0)
