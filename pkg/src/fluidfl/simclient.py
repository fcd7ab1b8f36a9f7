"""Simulated heterogeneous client: local SGD plus an analytic clock.

Epoch wall-time is computed, never slept: time = base * rate * slowdown * (1+u)
with u uniform in [-noise_pct, +noise_pct]. Training time scales linearly with
the sub-model rate, and a background-load schedule can multiply it during
chosen fractions of the run so the straggler set shifts at runtime.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, RateError, ShapeError
from .nn import Model, backward, forward, sgd_step


@dataclass
class LoadWindow:
    """Background load active while start <= progress < end."""

    start: float
    end: float
    slowdown: float

    def __post_init__(self):
        if not (0.0 <= self.start < self.end <= 1.0):
            raise ShapeError(f"window [{self.start}, {self.end}) is not valid")
        if self.slowdown < 1.0:
            raise ShapeError(f"slowdown must be >= 1, got {self.slowdown}")


@dataclass
class ClientSpec:
    id: int
    base_epoch_time: float
    noise_pct: float = 0.05
    load_schedule: list[LoadWindow] = field(default_factory=list)

    def __post_init__(self):
        if self.base_epoch_time <= 0:
            raise ShapeError("base_epoch_time must be positive")
        if not (0.0 <= self.noise_pct < 0.1):
            raise ShapeError(f"noise_pct must lie in [0, 0.1), got {self.noise_pct}")


@dataclass
class ClientReport:
    """What one client hands back after a round."""

    id: int
    epoch_time: float
    params: object          # Model or SubModel
    mask: object            # NeuronMask or None for a full update
    train_count: int
    eval_accuracy: float = 0.0
    eval_loss: float = 0.0
    eval_count: int = 0


def active_slowdown(spec: ClientSpec, progress: float) -> float:
    factor = 1.0
    for window in spec.load_schedule:
        if window.start <= progress < window.end:
            factor *= window.slowdown
    return factor


def simulate_epoch_time(spec: ClientSpec, rate: float, progress: float,
                        rng: np.random.Generator) -> float:
    """Simulated seconds for one local epoch at the given sub-model rate."""
    if not (0.0 < rate <= 1.0):
        raise RateError(f"rate must lie in (0, 1], got {rate}")
    if not (0.0 <= progress <= 1.0):
        raise ShapeError(f"progress must lie in [0, 1], got {progress}")
    u = rng.uniform(-spec.noise_pct, spec.noise_pct)
    return spec.base_epoch_time * rate * active_slowdown(spec, progress) * (1.0 + u)


def local_train(model: Model, features: np.ndarray, labels: np.ndarray,
                epochs: int, lr: float, batch_size: int,
                rng: np.random.Generator) -> Model:
    """Mini-batch SGD over the client's slice, deterministic per rng state."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.shape[0] == 0:
        raise DataError("client has no training examples")
    if epochs < 1 or batch_size < 1:
        raise DataError("epochs and batch_size must be >= 1")
    n = features.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start: start + batch_size]
            grads, _ = backward(model, features[batch], labels[batch])
            model = sgd_step(model, grads, lr)
    return model


def evaluate(model: Model, features: np.ndarray, labels: np.ndarray):
    """(accuracy, mean cross-entropy loss) on a slice; (0, 0) when empty."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.shape[0] == 0:
        return 0.0, 0.0
    probs = forward(model, features)
    predictions = probs.argmax(axis=1)
    accuracy = float((predictions == labels).mean())
    clipped = np.clip(probs[np.arange(labels.size), labels], 1e-12, None)
    loss = float(-np.log(clipped).mean())
    return accuracy, loss
