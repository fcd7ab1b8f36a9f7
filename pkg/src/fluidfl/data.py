"""Synthetic classification data and client partitioning (IID or label-skewed)."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CapacityError, DataError, ShapeError

IID = "iid"
LABEL_SKEW = "label_skew"


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ShapeError(f"features must be 2-D, got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ShapeError("labels must be one integer per example")
        if self.labels.size == 0:
            raise DataError("dataset is empty")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise DataError(f"labels must lie in [0, {self.class_count})")
        present = np.unique(self.labels)
        if present.size != self.class_count:
            missing = sorted(set(range(self.class_count)) - set(present.tolist()))
            raise DataError(f"classes with no examples: {missing}")

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class Partition:
    """Disjoint per-client index lists covering the dataset.

    Each client's index list is split into a train part and an eval part
    (the last 20 percent), so the weighted evaluation metric is deterministic.
    """

    client_indices: list[np.ndarray]
    train_indices: list[np.ndarray]
    eval_indices: list[np.ndarray]

    @property
    def clients(self) -> int:
        return len(self.client_indices)


def synth_gaussian_blobs(classes: int, dims: int, per_class: int, seed,
                         sigma: float = 1.0) -> Dataset:
    """Gaussian blobs with centroids separated by at least 5*sigma.

    The separation keeps the task learnable: a nearest-centroid rule already
    gets well above 95 percent accuracy. Deterministic for a fixed seed.
    """
    if classes < 1 or dims < 1 or per_class < 1:
        raise DataError("classes, dims and per_class must all be >= 1")
    rng = np.random.default_rng(seed)
    centroids = rng.normal(size=(classes, dims))
    if classes > 1:
        dists = [
            np.linalg.norm(centroids[i] - centroids[j])
            for i in range(classes) for j in range(i + 1, classes)
        ]
        min_dist = min(dists)
        if min_dist == 0.0:
            raise DataError("degenerate centroid draw, use a different seed")
        centroids *= (5.0 * sigma) / min_dist
    labels = np.repeat(np.arange(classes), per_class)
    noise = rng.normal(scale=sigma, size=(labels.size, dims))
    features = centroids[labels] + noise
    return Dataset(features, labels, classes)


def partition_dataset(ds: Dataset, clients: int, mode: str = IID,
                      alpha: float = 0.5, seed=0,
                      eval_fraction: float = 0.2) -> Partition:
    """Split a dataset across clients.

    IID deals each class round-robin so per-client class proportions stay
    within one example of the global mix. label_skew draws each class's
    client proportions from a symmetric Dirichlet(alpha); a client left with
    no examples is given one index from the largest client so every train
    split is non-empty.
    """
    if clients < 1:
        raise CapacityError("need at least one client")
    if clients > len(ds):
        raise CapacityError(f"{clients} clients but only {len(ds)} examples")
    rng = np.random.default_rng(seed)
    buckets: list[list[np.ndarray]] = [[] for _ in range(clients)]

    for cls in range(ds.class_count):
        idx = np.flatnonzero(ds.labels == cls)
        idx = rng.permutation(idx)
        if mode == IID:
            for c in range(clients):
                buckets[c].append(idx[c::clients])
        elif mode == LABEL_SKEW:
            if alpha <= 0:
                raise DataError(f"alpha must be positive, got {alpha}")
            proportions = rng.dirichlet(np.full(clients, alpha))
            cuts = (np.cumsum(proportions) * idx.size).astype(int)[:-1]
            for c, part in enumerate(np.split(idx, cuts)):
                buckets[c].append(part)
        else:
            raise DataError(f"unknown partition mode {mode!r}")

    owned = [np.concatenate(b) if b else np.array([], dtype=int) for b in buckets]

    # Dirichlet draws can starve a client; move single indices from the
    # largest client until everyone owns at least one example.
    while True:
        sizes = [o.size for o in owned]
        if min(sizes) > 0:
            break
        needy = sizes.index(0)
        donor = int(np.argmax(sizes))
        owned[needy] = owned[donor][-1:]
        owned[donor] = owned[donor][:-1]

    client_indices, train_indices, eval_indices = [], [], []
    for c in range(clients):
        mine = rng.permutation(owned[c])
        n_eval = int(np.floor(eval_fraction * mine.size))
        client_indices.append(mine)
        train_indices.append(mine[: mine.size - n_eval])
        eval_indices.append(mine[mine.size - n_eval:])
    return Partition(client_indices, train_indices, eval_indices)


def load_csv_dataset(path) -> Dataset:
    """Read a dataset from CSV with header f0,...,fd-1,label."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        d = len(header) - 1
        expected = [f"f{i}" for i in range(d)] + ["label"]
        if d < 1 or header != expected:
            raise DataError(f"{path}: header must be f0,...,fd-1,label")
        features, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != d + 1:
                raise DataError(f"{path}:{lineno}: expected {d + 1} columns")
            try:
                features.append([float(v) for v in row[:d]])
                labels.append(int(row[d]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not labels:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(features), np.array(labels), max(labels) + 1)
