"""Finite-difference verification of the analytic gradients."""

from __future__ import annotations

import numpy as np

from .nn import Model, backward, init_model


def numerical_gradient(model: Model, batch, labels, h: float = 1e-5):
    """Central-difference gradient of the batch loss, one parameter at a time."""
    def loss_at(m: Model) -> float:
        _, loss = backward(m, batch, labels)
        return loss

    grads_w, grads_b = [], []
    for j, layer in enumerate(model.layers):
        gw = np.zeros_like(layer.weights)
        for idx in np.ndindex(layer.weights.shape):
            probe = model.copy()
            probe.layers[j].weights[idx] += h
            up = loss_at(probe)
            probe.layers[j].weights[idx] -= 2 * h
            down = loss_at(probe)
            gw[idx] = (up - down) / (2 * h)
        gb = np.zeros_like(layer.biases)
        for idx in np.ndindex(layer.biases.shape):
            probe = model.copy()
            probe.layers[j].biases[idx] += h
            up = loss_at(probe)
            probe.layers[j].biases[idx] -= 2 * h
            down = loss_at(probe)
            gb[idx] = (up - down) / (2 * h)
        grads_w.append(gw)
        grads_b.append(gb)
    return grads_w, grads_b


def max_relative_error(model: Model, batch, labels, h: float = 1e-5) -> float:
    analytic, _ = backward(model, batch, labels)
    numeric_w, numeric_b = numerical_gradient(model, batch, labels, h)
    worst = 0.0
    for a, n in zip(analytic.weights + analytic.biases, numeric_w + numeric_b):
        scale = np.maximum(np.abs(a) + np.abs(n), 1e-8)
        worst = max(worst, float((np.abs(a - n) / scale).max()))
    return worst


def run_gradcheck(models: int = 20, seed: int = 0, h: float = 1e-5):
    """Check `models` seeded random models; returns per-model errors."""
    rng = np.random.default_rng(seed)
    errors = []
    for i in range(models):
        layout = [int(rng.integers(3, 7)), int(rng.integers(4, 9)),
                  int(rng.integers(3, 7)), int(rng.integers(2, 5))]
        model = init_model(layout, seed=[seed, i])
        batch = rng.normal(size=(4, layout[0]))
        labels = rng.integers(0, layout[-1], size=4)
        errors.append(max_relative_error(model, batch, labels, h))
    return errors
