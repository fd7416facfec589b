"""Desk-scale local learners and data handling.

Two flat-parameter model kinds (softmax logistic regression and a
one-hidden-layer rectifier MLP) with hand-written cross-entropy
gradients, seeded mini-batch SGD, equal data partitioning across nodes,
synthetic Gaussian-cluster data, and an IDX-format loader. Everything
is deterministic given its seed; weights live in flat float64 vectors
so the aggregation side never sees model structure.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

LOGISTIC = "logistic_regression"
MLP = "mlp_one_hidden"

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class Dataset(NamedTuple):
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    num_classes: int
    hidden_dim: int | None = None

    def __post_init__(self):
        if self.kind not in (LOGISTIC, MLP):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1 or self.num_classes < 2:
            raise ValueError("input_dim must be >= 1 and num_classes >= 2")
        if self.kind == MLP and (self.hidden_dim is None or self.hidden_dim < 1):
            raise ValueError("mlp_one_hidden requires a positive hidden_dim")

    @property
    def param_count(self) -> int:
        if self.kind == LOGISTIC:
            return self.input_dim * self.num_classes + self.num_classes
        h = self.hidden_dim
        return self.input_dim * h + h + h * self.num_classes + self.num_classes


@dataclass(frozen=True)
class TrainConfig:
    local_epochs: int
    learning_rate: float
    batch_size: int
    seed: int = 0

    def __post_init__(self):
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class DataPartition:
    """Disjoint near-equal per-node training shards plus one shared test set."""

    shards: list[Dataset]
    test: Dataset


def _layer_views(w: np.ndarray, spec: ModelSpec):
    """Split a flat vector into the model's weight matrices and biases."""
    d, c = spec.input_dim, spec.num_classes
    if spec.kind == LOGISTIC:
        W = w[: d * c].reshape(d, c)
        b = w[d * c :]
        return W, b
    h = spec.hidden_dim
    ofs = 0
    W1 = w[ofs : ofs + d * h].reshape(d, h)
    ofs += d * h
    b1 = w[ofs : ofs + h]
    ofs += h
    W2 = w[ofs : ofs + h * c].reshape(h, c)
    ofs += h * c
    b2 = w[ofs:]
    return W1, b1, W2, b2


def init_model(spec: ModelSpec, seed) -> np.ndarray:
    """Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization."""
    rng = np.random.default_rng(seed)
    d, c = spec.input_dim, spec.num_classes
    if spec.kind == LOGISTIC:
        bound = 1.0 / np.sqrt(d)
        return rng.uniform(-bound, bound, size=spec.param_count)
    h = spec.hidden_dim
    b1 = 1.0 / np.sqrt(d)
    b2 = 1.0 / np.sqrt(h)
    parts = [
        rng.uniform(-b1, b1, size=d * h),
        rng.uniform(-b1, b1, size=h),
        rng.uniform(-b2, b2, size=h * c),
        rng.uniform(-b2, b2, size=c),
    ]
    return np.concatenate(parts)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _logits(w: np.ndarray, x: np.ndarray, spec: ModelSpec):
    """Forward pass; for the MLP also returns the hidden activations."""
    if x.shape[1] != spec.input_dim:
        raise ValueError(f"feature dim {x.shape[1]} does not match spec {spec.input_dim}")
    if spec.kind == LOGISTIC:
        W, b = _layer_views(w, spec)
        return x @ W + b, None
    W1, b1, W2, b2 = _layer_views(w, spec)
    hidden = np.maximum(x @ W1 + b1, 0.0)
    return hidden @ W2 + b2, hidden


def loss(w: np.ndarray, batch, spec: ModelSpec) -> float:
    """Mean cross-entropy of the batch under softmax outputs."""
    x, y = batch
    logits, _ = _logits(w, np.asarray(x, dtype=np.float64), spec)
    probs = _softmax(logits)
    return float(-np.mean(np.log(probs[np.arange(len(y)), y])))


def gradient(w: np.ndarray, batch, spec: ModelSpec) -> np.ndarray:
    """Exact analytic gradient of the mean cross-entropy over the batch."""
    x, y = batch
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("gradient needs a non-empty batch")
    if w.shape[0] != spec.param_count:
        raise ValueError(f"weight vector length {w.shape[0]} != {spec.param_count}")
    logits, hidden = _logits(w, x, spec)
    probs = _softmax(logits)
    delta = probs
    delta[np.arange(len(y)), y] -= 1.0
    delta /= len(y)
    if spec.kind == LOGISTIC:
        gw = x.T @ delta
        gb = delta.sum(axis=0)
        return np.concatenate([gw.ravel(), gb])
    _, _, W2, _ = _layer_views(w, spec)
    gw2 = hidden.T @ delta
    gb2 = delta.sum(axis=0)
    dhidden = (delta @ W2.T) * (hidden > 0)
    gw1 = x.T @ dhidden
    gb1 = dhidden.sum(axis=0)
    return np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])


def local_train(
    w: np.ndarray,
    shard: Dataset,
    cfg: TrainConfig,
    spec: ModelSpec,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Run cfg.local_epochs epochs of mini-batch SGD from w on one shard.

    Shuffling draws from rng when given (so callers can chain epochs
    across calls on one stream) and otherwise from cfg.seed.
    """
    x, y = shard
    if len(y) == 0:
        raise ValueError("cannot train on an empty shard")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    w = np.array(w, dtype=np.float64)
    n = len(y)
    for _ in range(cfg.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            g = gradient(w, (x[idx], y[idx]), spec)
            w -= cfg.learning_rate * g
    return w


def evaluate(w: np.ndarray, test: Dataset, spec: ModelSpec) -> float:
    """Fraction of test points whose argmax prediction matches the label."""
    x, y = test
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    logits, _ = _logits(w, np.asarray(x, dtype=np.float64), spec)
    return float(np.mean(logits.argmax(axis=1) == np.asarray(y)))


def partition_dataset(dataset: Dataset, n: int, seed, train_fraction: float = 0.8) -> DataPartition:
    """Shuffle, split train/test, and deal the training set into n shards.

    Shards are disjoint, cover the training split, and differ in size by
    at most one sample; every node shares the same test set.
    """
    if n < 1:
        raise ValueError("need at least one node")
    if not (0.0 < train_fraction < 1.0):
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    total = len(dataset.y)
    n_train = int(round(total * train_fraction))
    if n_train < n:
        raise ValueError(f"{n_train} training samples cannot cover {n} nodes")
    if n_train >= total:
        raise ValueError("test split is empty; lower train_fraction or add data")
    rng = np.random.default_rng(seed)
    order = rng.permutation(total)
    train_idx, test_idx = order[:n_train], order[n_train:]
    shards = [
        Dataset(dataset.x[chunk], dataset.y[chunk])
        for chunk in np.array_split(train_idx, n)
    ]
    return DataPartition(shards=shards, test=Dataset(dataset.x[test_idx], dataset.y[test_idx]))


@dataclass(frozen=True)
class SynthSpec:
    clusters: int
    dims: int
    samples: int
    spread: float

    def __post_init__(self):
        if self.clusters < 2 or self.dims < 1:
            raise ValueError("need at least 2 clusters and 1 dimension")
        if self.samples < self.clusters:
            raise ValueError("need at least one sample per cluster")
        if self.spread < 0:
            raise ValueError("spread must be non-negative")


def _cluster_centers(clusters: int, dims: int) -> np.ndarray:
    """Deterministic well-separated centers: a radius-2 circle (or line)."""
    centers = np.zeros((clusters, dims))
    if dims == 1:
        centers[:, 0] = np.linspace(-2.0, 2.0, clusters)
    else:
        angles = 2.0 * np.pi * np.arange(clusters) / clusters
        centers[:, 0] = 2.0 * np.cos(angles)
        centers[:, 1] = 2.0 * np.sin(angles)
    return centers


def synth_dataset(spec: SynthSpec, seed) -> Dataset:
    """Gaussian blobs around fixed centers; the label is the cluster index."""
    rng = np.random.default_rng(seed)
    centers = _cluster_centers(spec.clusters, spec.dims)
    y = np.arange(spec.samples) % spec.clusters
    x = centers[y] + spec.spread * rng.standard_normal((spec.samples, spec.dims))
    return Dataset(x=x, y=y)


def _read_be32(buf: bytes, offset: int, path: str) -> tuple[int, int]:
    if offset + 4 > len(buf):
        raise ValueError(f"{path}: truncated header at byte {offset}")
    return struct.unpack_from(">I", buf, offset)[0], offset + 4


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair.

    Layout (all integers big-endian): images = magic 0x00000803, count,
    rows, cols, then count*rows*cols pixel bytes; labels = magic
    0x00000801, count, then count label bytes. Pixels are scaled to
    [0, 1] and images flattened to rows*cols features. Any size or
    magic inconsistency raises with the offending byte offset.
    """
    with open(images_path, "rb") as f:
        img_buf = f.read()
    with open(labels_path, "rb") as f:
        lbl_buf = f.read()

    ofs = 0
    magic, ofs = _read_be32(img_buf, ofs, str(images_path))
    if magic != IDX_IMAGES_MAGIC:
        raise ValueError(f"{images_path}: bad image magic {magic:#010x} at byte 0")
    count, ofs = _read_be32(img_buf, ofs, str(images_path))
    rows, ofs = _read_be32(img_buf, ofs, str(images_path))
    cols, ofs = _read_be32(img_buf, ofs, str(images_path))
    expected = ofs + count * rows * cols
    if len(img_buf) != expected:
        raise ValueError(
            f"{images_path}: expected {expected} bytes, found {len(img_buf)}"
            f" (data starts at byte {ofs})"
        )
    pixels = np.frombuffer(img_buf, dtype=np.uint8, offset=ofs)

    ofs = 0
    magic, ofs = _read_be32(lbl_buf, ofs, str(labels_path))
    if magic != IDX_LABELS_MAGIC:
        raise ValueError(f"{labels_path}: bad label magic {magic:#010x} at byte 0")
    lbl_count, ofs = _read_be32(lbl_buf, ofs, str(labels_path))
    if len(lbl_buf) != ofs + lbl_count:
        raise ValueError(
            f"{labels_path}: expected {ofs + lbl_count} bytes, found {len(lbl_buf)}"
            f" (data starts at byte {ofs})"
        )
    if lbl_count != count:
        raise ValueError(
            f"label count {lbl_count} does not match image count {count}"
        )

    x = pixels.reshape(count, rows * cols).astype(np.float32) / 255.0
    y = np.frombuffer(lbl_buf, dtype=np.uint8, offset=ofs).astype(np.int64)
    return Dataset(x=x, y=y)
