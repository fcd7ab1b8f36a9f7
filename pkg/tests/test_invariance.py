import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluidfl.errors import CalibrationError, DataError, ShapeError
from fluidfl.invariance import (CalibrationState, grow_threshold,
                                init_threshold, invariant_fraction,
                                layer_scores, median_scores, neuron_score,
                                vote_candidates)
from fluidfl.nn import DenseLayer, init_model


class TestNeuronScore:
    def test_basic_relative_change(self):
        g = neuron_score([2.0, 4.0], [2.1, 4.0], delta=1e-8)
        assert g == pytest.approx(0.05, rel=1e-6)

    def test_unchanged_neuron_scores_zero(self):
        assert neuron_score([1.5, -2.0], [1.5, -2.0]) == 0.0

    def test_near_zero_prior_weight_bounded_by_delta(self):
        g = neuron_score([0.0], [0.001], delta=1e-8)
        assert g == pytest.approx(1e5, rel=1e-3)

    def test_takes_max_over_parameters(self):
        g = neuron_score([1.0, 1.0, 1.0], [1.01, 1.5, 1.1], delta=1e-12)
        assert g == pytest.approx(0.5, rel=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            neuron_score([1.0], [1.0, 2.0])

    @settings(max_examples=60, deadline=None)
    @given(st.floats(min_value=0.25, max_value=4.0),
           st.lists(st.floats(min_value=0.1, max_value=5.0),
                    min_size=1, max_size=6))
    def test_scale_awareness(self, c, prev):
        prev = np.array(prev)
        cur = prev * 1.07 + 0.01
        base = neuron_score(prev, cur, delta=1e-12)
        scaled = neuron_score(c * prev, c * cur, delta=1e-12)
        assert scaled == pytest.approx(base, rel=1e-6)


class TestLayerScores:
    def test_matches_scalar_scores(self):
        rng = np.random.default_rng(3)
        prev = DenseLayer(rng.normal(size=(4, 3)), rng.normal(size=4))
        cur = DenseLayer(prev.weights + rng.normal(size=(4, 3)) * 0.1,
                         prev.biases + rng.normal(size=4) * 0.1)
        vec = layer_scores(prev, cur, delta=1e-8)
        for i in range(4):
            expected = neuron_score(
                np.concatenate([prev.weights[i], prev.biases[i: i + 1]]),
                np.concatenate([cur.weights[i], cur.biases[i: i + 1]]),
                delta=1e-8)
            assert vec[i] == pytest.approx(expected, rel=1e-12)


class TestInitThreshold:
    def test_single_epoch_takes_min(self):
        th = init_threshold([[np.array([0.1, 0.3, 0.2])]])
        assert th == [pytest.approx(0.1)]

    def test_mean_over_epochs(self):
        th = init_threshold([[np.array([0.1, 0.5])], [np.array([0.3, 0.4])]])
        assert th == [pytest.approx(0.2)]

    def test_constant_scores(self):
        th = init_threshold([[np.full(5, 0.07)], [np.full(5, 0.07)]])
        assert th == [pytest.approx(0.07)]

    def test_requires_scores(self):
        with pytest.raises(CalibrationError):
            init_threshold([])


def make_state(sizes, thresholds):
    model = init_model([3, *sizes, 2], seed=0)
    state = CalibrationState.for_model(model)
    state.thresholds = list(thresholds)
    state.initialized = True
    return state


class TestVoteCandidates:
    def test_majority_with_persistence(self):
        state = make_state([4], [0.5])
        # neuron 0 below threshold for 3 of 4 clients, others well above
        scores = [[np.array([0.1, 0.9, 0.9, 0.9])] for _ in range(3)]
        scores.append([np.array([0.8, 0.9, 0.9, 0.9])])
        first = vote_candidates(scores, state, persistence=2)
        assert first == [[]]  # persistence not yet reached
        second = vote_candidates(scores, state, persistence=2)
        assert second == [[0]]

    def test_exact_half_is_not_a_majority(self):
        state = make_state([2], [0.5])
        scores = [
            [np.array([0.1, 0.9])], [np.array([0.1, 0.9])],
            [np.array([0.8, 0.9])], [np.array([0.8, 0.9])],
        ]
        for _ in range(3):
            candidates = vote_candidates(scores, state, persistence=1)
        assert candidates == [[]]
        assert state.consecutive[0][0] == 0

    def test_candidates_ranked_by_median(self):
        state = make_state([3], [0.5])
        scores = [[np.array([0.02, 0.01, 0.9])] for _ in range(3)]
        vote_candidates(scores, state, persistence=1)
        candidates = vote_candidates(scores, state, persistence=1)
        assert candidates == [[1, 0]]

    def test_counter_resets_when_majority_lost(self):
        state = make_state([1], [0.5])
        below = [[np.array([0.1])] for _ in range(3)]
        above = [[np.array([0.9])] for _ in range(3)]
        vote_candidates(below, state, persistence=3)
        assert state.consecutive[0][0] == 1
        vote_candidates(above, state, persistence=3)
        assert state.consecutive[0][0] == 0

    def test_cannot_become_candidate_before_persistence_epochs(self):
        persistence = 4
        state = make_state([2], [1.0])
        scores = [[np.array([0.0, 0.0])] for _ in range(3)]
        for epoch in range(1, 7):
            candidates = vote_candidates(scores, state, persistence)
            if epoch < persistence:
                assert candidates == [[]]
            else:
                assert candidates == [[0, 1]]

    def test_frozen_layer_all_candidates_once_threshold_positive(self):
        # zero learning rate means zero scores everywhere
        state = make_state([5], [0.01])
        scores = [[np.zeros(5)] for _ in range(4)]
        vote_candidates(scores, state, persistence=2)
        candidates = vote_candidates(scores, state, persistence=2)
        assert candidates == [[0, 1, 2, 3, 4]]

    def test_empty_scores_rejected(self):
        state = make_state([2], [0.5])
        with pytest.raises(DataError):
            vote_candidates([], state, persistence=1)


class TestGrowThreshold:
    def test_grows_on_deficit(self):
        state = make_state([4], [0.1])
        grow_threshold(state, [5], [3], growth_factor=1.25)
        assert state.thresholds[0] == pytest.approx(0.125)

    def test_unchanged_when_satisfied(self):
        state = make_state([4], [0.1])
        grow_threshold(state, [5], [5], growth_factor=1.25)
        assert state.thresholds[0] == pytest.approx(0.1)

    def test_monotone_over_cycles(self):
        state = make_state([4], [0.05])
        seen = [state.thresholds[0]]
        for required in (3, 0, 2, 0, 4):
            grow_threshold(state, [required], [1])
            seen.append(state.thresholds[0])
        assert all(b >= a for a, b in zip(seen, seen[1:]))

    def test_zero_threshold_can_still_grow(self):
        state = make_state([4], [0.0])
        grow_threshold(state, [2], [0])
        assert state.thresholds[0] > 0.0


class TestInvariantFraction:
    def test_zero_threshold_gives_zero(self):
        scores = [np.array([0.0, 0.1, 0.2])]
        assert invariant_fraction(scores, [0.0]) == 0.0

    def test_huge_threshold_gives_one(self):
        scores = [np.array([0.0, 0.1]), np.array([5.0])]
        assert invariant_fraction(scores, [1e9, 1e9]) == 1.0

    def test_counts_across_layers(self):
        scores = [np.array([0.05, 0.5]), np.array([0.05, 0.5])]
        assert invariant_fraction(scores, [0.1, 0.1]) == 0.5

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(min_value=0.0, max_value=2.0),
                    min_size=1, max_size=30),
           st.floats(min_value=0.0, max_value=2.5),
           st.floats(min_value=0.0, max_value=2.5))
    def test_monotone_in_threshold(self, values, th1, th2):
        lo, hi = sorted((th1, th2))
        scores = [np.array(values)]
        assert invariant_fraction(scores, lo) <= invariant_fraction(scores, hi)


def test_median_scores_across_clients():
    per_client = [
        [np.array([0.1, 0.4])], [np.array([0.3, 0.2])], [np.array([0.2, 0.9])],
    ]
    medians = median_scores(per_client)
    assert np.allclose(medians[0], [0.2, 0.4])
