"""Minimal dense feed-forward network with exact backprop and plain SGD.

Everything is float64 and functional: operations return new values and never
mutate their inputs, so models can be shared freely across simulated clients.
A "neuron" is one row of a layer's weight matrix together with its bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError

RELU = "relu"
SOFTMAX = "softmax"
IDENTITY = "identity"
ACTIVATIONS = (RELU, SOFTMAX, IDENTITY)


@dataclass
class DenseLayer:
    """One fully-connected layer: weights (out_neurons x in_features) + biases."""

    weights: np.ndarray
    biases: np.ndarray
    activation: str = RELU

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got shape {self.weights.shape}")
        if self.biases.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"biases shape {self.biases.shape} does not match "
                f"{self.weights.shape[0]} output neurons"
            )
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")

    @property
    def out_neurons(self) -> int:
        return self.weights.shape[0]

    @property
    def in_features(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.biases.copy(), self.activation)


@dataclass
class Model:
    """Stack of DenseLayers with compatible shapes."""

    layers: list[DenseLayer]

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("model needs at least one layer")
        for j in range(1, len(self.layers)):
            prev, cur = self.layers[j - 1], self.layers[j]
            if cur.in_features != prev.out_neurons:
                raise ShapeError(
                    f"layer {j} expects {cur.in_features} inputs but layer "
                    f"{j - 1} emits {prev.out_neurons}"
                )

    @property
    def input_size(self) -> int:
        return self.layers[0].in_features

    @property
    def output_size(self) -> int:
        return self.layers[-1].out_neurons

    def copy(self) -> "Model":
        return Model([layer.copy() for layer in self.layers])

    def parameter_count(self) -> int:
        return sum(l.weights.size + l.biases.size for l in self.layers)

    def params_equal(self, other: "Model") -> bool:
        """Bit-exact parameter comparison, used by determinism checks."""
        if len(self.layers) != len(other.layers):
            return False
        for a, b in zip(self.layers, other.layers):
            if a.weights.shape != b.weights.shape:
                return False
            if not np.array_equal(a.weights, b.weights):
                return False
            if not np.array_equal(a.biases, b.biases):
                return False
        return True


@dataclass
class Gradients:
    """Per-layer weight and bias gradients, shape-mirroring a Model."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


def init_model(layer_sizes, seed, hidden_activation: str = RELU,
               output_activation: str = SOFTMAX) -> Model:
    """Build a seeded model for the given [in, hidden..., out] sizes.

    Every parameter draws from uniform(-s, s) with s = sqrt(6 / (fan_in +
    fan_out)). Non-zero biases keep relative-change scores finite-scaled from
    the first epoch. Identical seeds give bit-identical models.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ShapeError(f"need at least [in, out] positive sizes, got {sizes}")
    rng = np.random.default_rng(seed)
    layers = []
    for j in range(len(sizes) - 1):
        fan_in, fan_out = sizes[j], sizes[j + 1]
        s = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-s, s, size=(fan_out, fan_in))
        biases = rng.uniform(-s, s, size=fan_out)
        act = output_activation if j == len(sizes) - 2 else hidden_activation
        layers.append(DenseLayer(weights, biases, act))
    return Model(layers)


def _apply_activation(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == RELU:
        return np.maximum(z, 0.0)
    if activation == IDENTITY:
        return z
    # softmax, stabilized by row-max subtraction
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_pass(model: Model, batch: np.ndarray):
    """Returns (list of layer inputs a_0..a_{L-1}, list of pre-activations z)."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2:
        raise ShapeError(f"batch must be 2-D, got shape {batch.shape}")
    if batch.shape[1] != model.input_size:
        raise ShapeError(
            f"batch has {batch.shape[1]} features, model expects {model.input_size}"
        )
    inputs = [batch]
    pre = []
    a = batch
    for layer in model.layers:
        z = a @ layer.weights.T + layer.biases
        pre.append(z)
        a = _apply_activation(z, layer.activation)
        inputs.append(a)
    return inputs, pre


def forward(model: Model, batch: np.ndarray) -> np.ndarray:
    """Run inference; with a softmax head each output row sums to 1."""
    inputs, _ = _forward_pass(model, batch)
    return inputs[-1]


def backward(model: Model, batch: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy loss and its exact gradient over a batch.

    The final layer must be softmax. Returns (Gradients, loss). The gradient
    is the mean over the batch, so duplicating every example leaves it
    unchanged.
    """
    labels = np.asarray(labels)
    if labels.size == 0 or np.asarray(batch).shape[0] == 0:
        raise DataError("cannot take a gradient over an empty batch")
    if model.layers[-1].activation != SOFTMAX:
        raise ShapeError("cross-entropy gradient requires a softmax output layer")
    inputs, pre = _forward_pass(model, batch)
    n, classes = inputs[-1].shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch size {n}")
    if labels.min() < 0 or labels.max() >= classes:
        raise DataError(f"labels must lie in [0, {classes})")

    z_out = pre[-1]
    log_probs = z_out - z_out.max(axis=1, keepdims=True)
    log_probs = log_probs - np.log(np.exp(log_probs).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(n), labels].mean())

    probs = inputs[-1]
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grad_w = [None] * len(model.layers)
    grad_b = [None] * len(model.layers)
    for j in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[j]
        grad_w[j] = delta.T @ inputs[j]
        grad_b[j] = delta.sum(axis=0)
        if j > 0:
            upstream = delta @ layer.weights
            prev = model.layers[j - 1]
            if prev.activation == RELU:
                upstream = upstream * (pre[j - 1] > 0.0)
            elif prev.activation == SOFTMAX:
                raise ShapeError("softmax is only supported on the output layer")
            delta = upstream
    return Gradients(grad_w, grad_b), loss


def sgd_step(model: Model, grads: Gradients, lr: float) -> Model:
    """One plain gradient step, p' = p - lr * g, returned as a new model."""
    if lr < 0:
        raise ShapeError(f"learning rate must be non-negative, got {lr}")
    if len(grads.weights) != len(model.layers):
        raise ShapeError("gradient does not shape-mirror the model")
    layers = []
    for layer, gw, gb in zip(model.layers, grads.weights, grads.biases):
        if gw.shape != layer.weights.shape or gb.shape != layer.biases.shape:
            raise ShapeError("gradient does not shape-mirror the model")
        layers.append(
            DenseLayer(layer.weights - lr * gw, layer.biases - lr * gb,
                       layer.activation)
        )
    return Model(layers)
