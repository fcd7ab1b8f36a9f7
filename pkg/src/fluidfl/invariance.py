"""Neuron invariance scoring, cross-client candidate voting and threshold
calibration.

A neuron's score g is the largest relative change among its parameters
between two calibration points: g = max_p |cur_p - prev_p| / (|prev_p| + delta).
The additive delta keeps the measure total when a previous weight is zero.
Scores come only from clients that trained the full model; a neuron becomes a
drop candidate once a strict majority of those clients scored it below the
layer threshold for `persistence` consecutive epochs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, DataError, ShapeError
from .nn import DenseLayer, Model

DEFAULT_DELTA = 1e-8


def neuron_score(prev, cur, delta: float = DEFAULT_DELTA) -> float:
    """Largest relative parameter change of one neuron."""
    prev = np.asarray(prev, dtype=np.float64)
    cur = np.asarray(cur, dtype=np.float64)
    if prev.shape != cur.shape or prev.ndim != 1 or prev.size == 0:
        raise ShapeError("prev and cur must be equal-length 1-D parameter vectors")
    if delta <= 0:
        raise ShapeError(f"delta must be positive, got {delta}")
    return float(np.max(np.abs(cur - prev) / (np.abs(prev) + delta)))


def layer_scores(prev: DenseLayer, cur: DenseLayer,
                 delta: float = DEFAULT_DELTA) -> np.ndarray:
    """Vectorized neuron_score over every neuron (row + bias) of a layer."""
    if prev.weights.shape != cur.weights.shape:
        raise ShapeError("layers have different shapes")
    if delta <= 0:
        raise ShapeError(f"delta must be positive, got {delta}")
    w_ratio = np.abs(cur.weights - prev.weights) / (np.abs(prev.weights) + delta)
    b_ratio = np.abs(cur.biases - prev.biases) / (np.abs(prev.biases) + delta)
    return np.maximum(w_ratio.max(axis=1), b_ratio)


def model_scores(prev: Model, cur: Model,
                 delta: float = DEFAULT_DELTA) -> list[np.ndarray]:
    """Per hidden layer score vectors between two snapshots of a model."""
    if len(prev.layers) != len(cur.layers):
        raise ShapeError("models have different depths")
    return [
        layer_scores(p, c, delta)
        for p, c in zip(prev.layers[:-1], cur.layers[:-1])
    ]


def median_scores(per_client: list[list[np.ndarray]]) -> list[np.ndarray]:
    """Per-neuron median score across clients, one array per hidden layer."""
    if not per_client:
        raise DataError("no score sets")
    layers = len(per_client[0])
    return [
        np.median(np.stack([s[layer] for s in per_client]), axis=0)
        for layer in range(layers)
    ]


@dataclass
class CalibrationState:
    """Per-layer drop thresholds plus the vote bookkeeping behind candidacy.

    votes[l][i] is how many full-model clients scored neuron i below the
    layer threshold in the latest epoch; consecutive[l][i] counts how many
    epochs in a row that happened for a strict majority, resetting to zero
    whenever the majority is lost.
    """

    thresholds: list[float]
    votes: list[np.ndarray]
    consecutive: list[np.ndarray]
    history: int = 0
    initialized: bool = False

    @classmethod
    def for_model(cls, model: Model) -> "CalibrationState":
        sizes = [layer.out_neurons for layer in model.layers[:-1]]
        return cls(
            thresholds=[0.0] * len(sizes),
            votes=[np.zeros(n, dtype=int) for n in sizes],
            consecutive=[np.zeros(n, dtype=int) for n in sizes],
        )


def init_threshold(score_history: list[list[np.ndarray]]) -> list[float]:
    """Initial per-layer threshold: mean over warmup epochs of the epoch's
    minimum neuron score in that layer."""
    if not score_history:
        raise CalibrationError("need at least one epoch of scores")
    layers = len(score_history[0])
    return [
        float(np.mean([float(np.min(epoch[layer])) for epoch in score_history]))
        for layer in range(layers)
    ]


def vote_candidates(per_client: list[list[np.ndarray]], state: CalibrationState,
                    persistence: int) -> list[list[int]]:
    """Update votes from this epoch's full-model scores and rank candidates.

    Returns, per hidden layer, candidate neuron indices ordered ascending by
    median score (ties by index). Mutates state.votes and state.consecutive.
    """
    if not per_client:
        raise DataError("no score sets")
    if persistence < 1:
        raise CalibrationError(f"persistence must be >= 1, got {persistence}")
    n_clients = len(per_client)
    medians = median_scores(per_client)
    candidates: list[list[int]] = []
    for layer, median in enumerate(medians):
        stacked = np.stack([s[layer] for s in per_client])
        below = (stacked < state.thresholds[layer]).sum(axis=0)
        majority = below > n_clients / 2.0
        state.votes[layer] = below
        state.consecutive[layer] = np.where(majority,
                                            state.consecutive[layer] + 1, 0)
        eligible = majority & (state.consecutive[layer] >= persistence)
        order = np.lexsort((np.arange(median.size), median))
        candidates.append([int(i) for i in order if eligible[i]])
    state.history += 1
    return candidates


_ZERO_THRESHOLD_SEED = 1e-12


def grow_threshold(state: CalibrationState, required_drops: list[int],
                   candidate_counts: list[int],
                   growth_factor: float = 1.25) -> list[float]:
    """Scale a layer's threshold up while it yields too few candidates.

    Multiplicative growth cannot leave zero, so an exactly-zero threshold is
    seeded with a tiny positive value before growing.
    """
    if growth_factor <= 1.0:
        raise CalibrationError(f"growth factor must exceed 1, got {growth_factor}")
    for layer, (required, have) in enumerate(zip(required_drops,
                                                 candidate_counts)):
        if required < 0:
            raise CalibrationError("required drop count cannot be negative")
        if have < required:
            th = state.thresholds[layer]
            state.thresholds[layer] = (
                th * growth_factor if th > 0 else _ZERO_THRESHOLD_SEED
            )
    return list(state.thresholds)


def invariant_fraction(scores: list[np.ndarray], thresholds) -> float:
    """Fraction of all hidden neurons scoring strictly below their layer
    threshold."""
    total = sum(int(s.size) for s in scores)
    if total == 0:
        return 0.0
    if np.isscalar(thresholds):
        thresholds = [float(thresholds)] * len(scores)
    below = sum(
        int((np.asarray(s) < th).sum()) for s, th in zip(scores, thresholds)
    )
    return below / total
