"""Neuron masks, sub-model extraction and partial-update aggregation.

A mask covers every hidden layer of a model (the output layer and the raw
input features are never dropped). Dropping neuron i of hidden layer j
removes row i of that layer's weights, bias i, and column i of layer j+1's
weights, which is what makes the straggler's sub-model cheaper to train.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AggregationError, RateError, ShapeError
from .nn import DenseLayer, Model


@dataclass
class NeuronMask:
    """Per hidden layer, a boolean keep-vector; rate is the kept fraction."""

    keep: list[np.ndarray]
    rate: float

    def kept_indices(self, layer: int) -> np.ndarray:
        return np.flatnonzero(self.keep[layer])


@dataclass
class SubModel:
    """A structurally reduced model plus the mask that produced it."""

    model: Model
    mask: NeuronMask


def kept_count(rate: float, n: int) -> int:
    """Neurons kept at this rate: round half-up, never below 1."""
    k = int(math.floor(rate * n + 0.5))
    return min(n, max(1, k))


def _check_rate(rate: float) -> None:
    if not (0.0 < rate <= 1.0):
        raise RateError(f"rate must lie in (0, 1], got {rate}")


def _hidden_sizes(model: Model) -> list[int]:
    return [layer.out_neurons for layer in model.layers[:-1]]


def full_mask(model: Model) -> NeuronMask:
    return NeuronMask([np.ones(n, dtype=bool) for n in _hidden_sizes(model)], 1.0)


def mask_random(model: Model, rate: float, seed) -> NeuronMask:
    """Uniformly random keep-set per hidden layer, deterministic per seed."""
    _check_rate(rate)
    rng = np.random.default_rng(seed)
    keep = []
    for n in _hidden_sizes(model):
        k = kept_count(rate, n)
        vec = np.zeros(n, dtype=bool)
        vec[rng.permutation(n)[:k]] = True
        keep.append(vec)
    return NeuronMask(keep, rate)


def mask_ordered(model: Model, rate: float) -> NeuronMask:
    """Keep the lowest-index block of each hidden layer; seed-free."""
    _check_rate(rate)
    keep = []
    for n in _hidden_sizes(model):
        vec = np.zeros(n, dtype=bool)
        vec[: kept_count(rate, n)] = True
        keep.append(vec)
    return NeuronMask(keep, rate)


def mask_invariant(model: Model, rate: float, candidates: list[list[int]],
                   scores: list[np.ndarray]) -> NeuronMask:
    """Drop the most invariant neurons first.

    candidates holds, per hidden layer, neuron indices ranked most-invariant
    first. When a layer has fewer candidates than neurons to drop, the
    remaining drops fall back to the lowest-scoring non-candidates (ties by
    index), so the mask is always well-defined even before votes accumulate.
    """
    _check_rate(rate)
    sizes = _hidden_sizes(model)
    if len(candidates) != len(sizes) or len(scores) != len(sizes):
        raise ShapeError("candidates/scores must cover every hidden layer")
    keep = []
    for layer, n in enumerate(sizes):
        drops_needed = n - kept_count(rate, n)
        ranked = [int(i) for i in candidates[layer]]
        if any(i < 0 or i >= n for i in ranked):
            raise ShapeError(f"candidate index out of range for layer {layer}")
        chosen = ranked[:drops_needed]
        if len(chosen) < drops_needed:
            layer_scores = np.asarray(scores[layer], dtype=np.float64)
            if layer_scores.shape != (n,):
                raise ShapeError(f"scores for layer {layer} must have length {n}")
            in_chosen = set(chosen)
            order = np.lexsort((np.arange(n), layer_scores))
            fallback = [int(i) for i in order if int(i) not in in_chosen]
            chosen += fallback[: drops_needed - len(chosen)]
        vec = np.ones(n, dtype=bool)
        vec[chosen] = False
        keep.append(vec)
    return NeuronMask(keep, rate)


def _validate_mask(model: Model, mask: NeuronMask) -> None:
    sizes = _hidden_sizes(model)
    if len(mask.keep) != len(sizes):
        raise ShapeError(
            f"mask covers {len(mask.keep)} hidden layers, model has {len(sizes)}"
        )
    for layer, (vec, n) in enumerate(zip(mask.keep, sizes)):
        if vec.shape != (n,):
            raise ShapeError(f"mask for layer {layer} has wrong length")
        if not vec.any():
            raise ShapeError(f"mask for layer {layer} keeps no neurons")


def extract(model: Model, mask: NeuronMask) -> SubModel:
    """Slice a sub-model out of the global model along the mask."""
    _validate_mask(model, mask)
    layers = []
    last = len(model.layers) - 1
    for j, layer in enumerate(model.layers):
        rows = mask.keep[j] if j < last else np.ones(layer.out_neurons, dtype=bool)
        cols = mask.keep[j - 1] if j > 0 else np.ones(layer.in_features, dtype=bool)
        layers.append(
            DenseLayer(layer.weights[np.ix_(rows, cols)], layer.biases[rows],
                       layer.activation)
        )
    return SubModel(Model(layers), NeuronMask([v.copy() for v in mask.keep],
                                              mask.rate))


def merge(global_model: Model, updates) -> Model:
    """Example-count-weighted FedAvg over possibly partial updates.

    updates is a sequence of (model_or_submodel, example_count, mask) where
    mask may be None for a full update. Every global coordinate becomes the
    weighted mean over exactly the clients whose mask kept it; coordinates
    kept by nobody retain their previous global value. Weighting divides each
    client's count by the per-coordinate total first, which keeps a
    single-contributor coordinate bit-identical to that client's value.
    """
    updates = list(updates)
    if not updates:
        raise AggregationError("no client updates to aggregate")

    prepared = []
    for update, count, mask in updates:
        if isinstance(update, SubModel):
            mask = update.mask
            update_model = update.model
        else:
            update_model = update
        if mask is None:
            mask = full_mask(global_model)
        _validate_mask(global_model, mask)
        if len(update_model.layers) != len(global_model.layers):
            raise ShapeError("update depth does not match the global model")
        if count <= 0:
            raise AggregationError(f"non-positive example count {count}")
        prepared.append((update_model, float(count), mask))

    last = len(global_model.layers) - 1
    merged_layers = []
    for j, g_layer in enumerate(global_model.layers):
        w_shape, b_shape = g_layer.weights.shape, g_layer.biases.shape
        w_total = np.zeros(w_shape)
        b_total = np.zeros(b_shape)
        placed = []
        for update_model, count, mask in prepared:
            rows = mask.keep[j] if j < last else np.ones(w_shape[0], dtype=bool)
            cols = mask.keep[j - 1] if j > 0 else np.ones(w_shape[1], dtype=bool)
            u_layer = update_model.layers[j]
            if u_layer.weights.shape == w_shape:
                w_sel = u_layer.weights[np.ix_(rows, cols)]
                b_sel = u_layer.biases[rows]
            elif u_layer.weights.shape == (int(rows.sum()), int(cols.sum())):
                w_sel = u_layer.weights
                b_sel = u_layer.biases
            else:
                raise ShapeError(
                    f"update layer {j} shape {u_layer.weights.shape} matches "
                    f"neither the model nor its mask"
                )
            w_total[np.ix_(rows, cols)] += count
            b_total[rows] += count
            placed.append((rows, cols, w_sel, b_sel, count))

        w_acc = np.zeros(w_shape)
        b_acc = np.zeros(b_shape)
        for rows, cols, w_sel, b_sel, count in placed:
            sub = np.ix_(rows, cols)
            w_acc[sub] += (count / w_total[sub]) * w_sel
            b_acc[rows] += (count / b_total[rows]) * b_sel
        new_w = np.where(w_total > 0, w_acc, g_layer.weights)
        new_b = np.where(b_total > 0, b_acc, g_layer.biases)
        if not (np.isfinite(new_w).all() and np.isfinite(new_b).all()):
            raise AggregationError(f"aggregated layer {j} contains NaN or Inf")
        merged_layers.append(DenseLayer(new_w, new_b, g_layer.activation))
    return Model(merged_layers)
