"""Federated-round orchestration for all methods, metrics, and config I/O.

One round = every node trains local_epochs on its shard from the
current global weights, produces its payload (the local delta by
default), and the server folds the payloads back into the model:
two-bit updates go through mapping -> wire frame -> vote aggregation,
the baselines through plain or clipped-noisy averaging, and standalone
skips communication entirely. All randomness derives from the single
config seed, per purpose and per (round, node), so serial and
node-parallel execution produce identical trajectories.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .aggregation import (
    M_FLOOR_DEFAULT,
    GlobalModelState,
    aggregate_round,
    assign_locations,
)
from .fixedpoint import FixedPointConfig
from .mapping import map_update
from .protocol import DownlinkMessage, pack, unpack, uplink_overhead
from .training import (
    Dataset,
    ModelSpec,
    SynthSpec,
    TrainConfig,
    evaluate,
    init_model,
    load_idx,
    local_train,
    partition_dataset,
    synth_dataset,
)

METHODS = ("twobit", "fedavg", "dp_fedavg", "standalone")

# Seed-stream tags: every random draw derives from (seed, tag, ...).
_TAG_DATA = 11
_TAG_PARTITION = 13
_TAG_INIT = 17
_TAG_ASSIGN = 19
_TAG_TRAIN = 23
_TAG_NOISE = 29

METRICS_HEADER = ("round", "accuracy", "uplink_bits", "m", "recon_err_mean", "recon_err_max")


@dataclass(frozen=True)
class IdxSpec:
    """Paths to an IDX image/label pair used as the raw dataset."""

    images: str
    labels: str


@dataclass(frozen=True)
class SimulationConfig:
    method: str = "twobit"
    n: int = 31
    p: int = 32
    e: int = 10
    rounds: int = 50
    seed: int = 0
    m_initial: float = 1.0
    m_mode: str = "monotone"
    m_floor: float = M_FLOOR_DEFAULT
    noise_sigma: float = 0.0
    clip_norm: float = 1.0
    payload: str = "delta"
    parallel: bool = False
    train_fraction: float = 0.8
    model: ModelSpec = field(
        default_factory=lambda: ModelSpec(kind="logistic_regression", input_dim=2, num_classes=2)
    )
    dataset: SynthSpec | IdxSpec = field(
        default_factory=lambda: SynthSpec(clusters=2, dims=2, samples=1240, spread=1.0)
    )
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(local_epochs=10, learning_rate=0.1, batch_size=16)
    )

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.n < 1:
            raise ValueError("need at least one node")
        if self.rounds < 1:
            raise ValueError("need at least one round")
        if self.e < 1:
            raise ValueError("need at least one local epoch")
        if self.m_initial <= 0:
            raise ValueError("m_initial must be positive")
        if self.m_mode not in ("monotone", "adaptive"):
            raise ValueError(f"unknown m_mode {self.m_mode!r}")
        if self.payload not in ("delta", "weights"):
            raise ValueError(f"unknown payload {self.payload!r}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.method == "twobit":
            FixedPointConfig(p=self.p, m=self.m_initial)  # validates p and m together


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    accuracy: float
    uplink_bits: int
    m: float | None = None
    recon_err_mean: float | None = None
    recon_err_max: float | None = None


def fedavg_aggregate(local_vectors) -> np.ndarray:
    """Element-wise mean of the local vectors (equal shards, equal weight)."""
    vectors = [np.asarray(v, dtype=np.float64) for v in local_vectors]
    if not vectors:
        raise ValueError("cannot average an empty set of vectors")
    shape = vectors[0].shape
    if any(v.shape != shape for v in vectors):
        raise ValueError("all local vectors must share a shape")
    return np.mean(np.stack(vectors, axis=0), axis=0)


def dp_fedavg_aggregate(local_vectors, noise_sigma: float, clip_norm: float, seed) -> np.ndarray:
    """Clip each local vector to clip_norm, add per-client Gaussian noise, average."""
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    if clip_norm <= 0:
        raise ValueError("clip_norm must be positive")
    vectors = [np.asarray(v, dtype=np.float64) for v in local_vectors]
    if not vectors:
        raise ValueError("cannot average an empty set of vectors")
    shape = vectors[0].shape
    if any(v.shape != shape for v in vectors):
        raise ValueError("all local vectors must share a shape")
    rng = np.random.default_rng(seed)
    noisy = []
    for v in vectors:
        norm = float(np.linalg.norm(v))
        if norm > clip_norm:
            v = v * (clip_norm / norm)
        noisy.append(v + rng.normal(0.0, noise_sigma, size=shape))
    return np.mean(np.stack(noisy, axis=0), axis=0)


def _build_dataset(cfg: SimulationConfig) -> Dataset:
    if isinstance(cfg.dataset, SynthSpec):
        return synth_dataset(cfg.dataset, seed=[cfg.seed, _TAG_DATA])
    return load_idx(cfg.dataset.images, cfg.dataset.labels)


def _train_nodes(cfg: SimulationConfig, w: np.ndarray, shards, round_index: int, node_ids):
    """Train the given nodes from w; order of results follows node_ids."""
    train_cfg = TrainConfig(
        local_epochs=cfg.e,
        learning_rate=cfg.train.learning_rate,
        batch_size=cfg.train.batch_size,
    )

    def run(node: int) -> np.ndarray:
        rng = np.random.default_rng([cfg.seed, _TAG_TRAIN, round_index, node])
        return local_train(w, shards[node], train_cfg, cfg.model, rng=rng)

    if cfg.parallel and len(node_ids) > 1:
        with ThreadPoolExecutor(max_workers=min(8, len(node_ids))) as pool:
            return list(pool.map(run, node_ids))
    return [run(node) for node in node_ids]


def run_simulation(cfg: SimulationConfig) -> list[RoundMetrics]:
    """Run the configured method for cfg.rounds rounds and collect metrics.

    Fully deterministic given cfg.seed, with or without node-parallel
    training.
    """
    dataset = _build_dataset(cfg)
    part = partition_dataset(
        dataset, cfg.n, seed=[cfg.seed, _TAG_PARTITION], train_fraction=cfg.train_fraction
    )
    w = init_model(cfg.model, seed=[cfg.seed, _TAG_INIT])
    param_count = cfg.model.param_count
    m = cfg.m_initial
    metrics: list[RoundMetrics] = []

    for k in range(cfg.rounds):
        if cfg.method == "standalone":
            w = _train_nodes(cfg, w, part.shards, k, [0])[0]
            metrics.append(
                RoundMetrics(round=k, accuracy=evaluate(w, part.test, cfg.model), uplink_bits=0)
            )
            continue

        local_weights = _train_nodes(cfg, w, part.shards, k, range(cfg.n))
        if cfg.payload == "delta":
            payloads = [lw - w for lw in local_weights]
        else:
            payloads = local_weights

        if cfg.method == "twobit":
            fp = FixedPointConfig(p=cfg.p, m=m)
            assignment = assign_locations(
                cfg.n, cfg.p, rng_seed=[cfg.seed, _TAG_ASSIGN, k], round_index=k
            )
            downlinks = [
                DownlinkMessage(
                    round=k, weights=(), m=m, base_location=assignment.base_locations[i]
                )
                for i in range(cfg.n)
            ]
            frames = [
                pack(
                    map_update(
                        payloads[i], fp, downlinks[i].base_location, node_id=i, round_index=k
                    )
                )
                for i in range(cfg.n)
            ]
            received = [unpack(f) for f in frames]
            state = aggregate_round(
                received,
                assignment,
                GlobalModelState(weights=w, m=m, round=k),
                fp,
                payload=cfg.payload,
                m_mode=cfg.m_mode,
                m_floor=cfg.m_floor,
            )
            applied = state.weights - w if cfg.payload == "delta" else state.weights
            target = fedavg_aggregate(payloads)
            err = np.abs(applied - target)
            w, m = state.weights, state.m
            uplink = cfg.n * uplink_overhead(
                "twobit", cfg.p, param_count
            ).uplink_bits_per_node_per_round
            metrics.append(
                RoundMetrics(
                    round=k,
                    accuracy=evaluate(w, part.test, cfg.model),
                    uplink_bits=uplink,
                    m=m,
                    recon_err_mean=float(err.mean()),
                    recon_err_max=float(err.max()),
                )
            )
            continue

        if cfg.method == "fedavg":
            aggregate = fedavg_aggregate(payloads)
        else:  # dp_fedavg
            aggregate = dp_fedavg_aggregate(
                payloads, cfg.noise_sigma, cfg.clip_norm, seed=[cfg.seed, _TAG_NOISE, k]
            )
        w = w + aggregate if cfg.payload == "delta" else aggregate
        uplink = cfg.n * uplink_overhead(cfg.method, cfg.p, param_count).uplink_bits_per_node_per_round
        metrics.append(
            RoundMetrics(round=k, accuracy=evaluate(w, part.test, cfg.model), uplink_bits=uplink)
        )

    return metrics


def _format_value(value) -> str:
    if value is None:
        return ""
    return str(value)


def emit_metrics(metrics, path, fmt: str = "csv") -> None:
    """Write metrics to path as CSV (default) or key=value lines.

    Byte-identical output for identical metric sequences.
    """
    if fmt == "csv":
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(METRICS_HEADER)
            for row in metrics:
                writer.writerow(
                    [
                        row.round,
                        _format_value(row.accuracy),
                        row.uplink_bits,
                        _format_value(row.m),
                        _format_value(row.recon_err_mean),
                        _format_value(row.recon_err_max),
                    ]
                )
        return
    if fmt == "kv":
        with open(path, "w", newline="") as f:
            for row in metrics:
                pairs = [
                    f"round={row.round}",
                    f"accuracy={_format_value(row.accuracy)}",
                    f"uplink_bits={row.uplink_bits}",
                    f"m={_format_value(row.m)}",
                    f"recon_err_mean={_format_value(row.recon_err_mean)}",
                    f"recon_err_max={_format_value(row.recon_err_max)}",
                ]
                f.write(" ".join(pairs) + "\n")
        return
    raise ValueError(f"unknown metrics format {fmt!r}")


def read_metrics(path) -> list[RoundMetrics]:
    """Read back a CSV written by emit_metrics."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = tuple(next(reader))
        if header != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header {header}")
        out = []
        for row in reader:
            out.append(
                RoundMetrics(
                    round=int(row[0]),
                    accuracy=float(row[1]),
                    uplink_bits=int(row[2]),
                    m=float(row[3]) if row[3] else None,
                    recon_err_mean=float(row[4]) if row[4] else None,
                    recon_err_max=float(row[5]) if row[5] else None,
                )
            )
    return out


# Config-file keys and their converters. The format is one `key = value`
# per line; blank lines and lines starting with # are ignored.
def _to_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


_CONFIG_KEYS = {
    "method": str,
    "n": int,
    "p": int,
    "e": int,
    "rounds": int,
    "seed": int,
    "m_initial": float,
    "m_mode": str,
    "m_floor": float,
    "noise_sigma": float,
    "clip_norm": float,
    "payload": str,
    "parallel": _to_bool,
    "train_fraction": float,
    "model.kind": str,
    "model.input_dim": int,
    "model.num_classes": int,
    "model.hidden_dim": int,
    "dataset.kind": str,
    "dataset.clusters": int,
    "dataset.dims": int,
    "dataset.samples": int,
    "dataset.spread": float,
    "dataset.images": str,
    "dataset.labels": str,
    "train.learning_rate": float,
    "train.batch_size": int,
}


def parse_config(text: str) -> SimulationConfig:
    """Parse the plain-text key/value simulation config format.

    Recognized keys (all optional, defaults in parentheses):

        method (twobit)            one of twobit|fedavg|dp_fedavg|standalone
        n (31), p (32), e (10), rounds (50), seed (0)
        m_initial (1.0), m_mode (monotone|adaptive), m_floor (1e-6)
        noise_sigma (0.0), clip_norm (1.0)      dp_fedavg only
        payload (delta|weights), parallel (false), train_fraction (0.8)
        model.kind (logistic_regression|mlp_one_hidden)
        model.input_dim (2), model.num_classes (2), model.hidden_dim
        dataset.kind (synth|idx)
        dataset.clusters (2), dataset.dims (2), dataset.samples (1240),
        dataset.spread (1.0)                    synth datasets
        dataset.images, dataset.labels          idx datasets
        train.learning_rate (0.1), train.batch_size (16)
    """
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: bad value for {key}: {exc}") from exc

    defaults = SimulationConfig()
    model = ModelSpec(
        kind=values.get("model.kind", defaults.model.kind),
        input_dim=values.get("model.input_dim", defaults.model.input_dim),
        num_classes=values.get("model.num_classes", defaults.model.num_classes),
        hidden_dim=values.get("model.hidden_dim"),
    )
    dataset_kind = values.get("dataset.kind", "synth")
    if dataset_kind == "synth":
        base = defaults.dataset
        dataset = SynthSpec(
            clusters=values.get("dataset.clusters", base.clusters),
            dims=values.get("dataset.dims", base.dims),
            samples=values.get("dataset.samples", base.samples),
            spread=values.get("dataset.spread", base.spread),
        )
    elif dataset_kind == "idx":
        try:
            dataset = IdxSpec(images=values["dataset.images"], labels=values["dataset.labels"])
        except KeyError as exc:
            raise ValueError("idx datasets require dataset.images and dataset.labels") from exc
    else:
        raise ValueError(f"unknown dataset.kind {dataset_kind!r}")
    train = TrainConfig(
        local_epochs=values.get("e", defaults.e),
        learning_rate=values.get("train.learning_rate", defaults.train.learning_rate),
        batch_size=values.get("train.batch_size", defaults.train.batch_size),
    )
    return SimulationConfig(
        method=values.get("method", defaults.method),
        n=values.get("n", defaults.n),
        p=values.get("p", defaults.p),
        e=values.get("e", defaults.e),
        rounds=values.get("rounds", defaults.rounds),
        seed=values.get("seed", defaults.seed),
        m_initial=values.get("m_initial", defaults.m_initial),
        m_mode=values.get("m_mode", defaults.m_mode),
        m_floor=values.get("m_floor", defaults.m_floor),
        noise_sigma=values.get("noise_sigma", defaults.noise_sigma),
        clip_norm=values.get("clip_norm", defaults.clip_norm),
        payload=values.get("payload", defaults.payload),
        parallel=values.get("parallel", defaults.parallel),
        train_fraction=values.get("train_fraction", defaults.train_fraction),
        model=model,
        dataset=dataset,
        train=train,
    )


def load_config(path) -> SimulationConfig:
    with open(path) as f:
        return parse_config(f.read())


def with_seed(cfg: SimulationConfig, seed: int) -> SimulationConfig:
    """Copy of cfg with the seed replaced (CLI --seed override)."""
    return replace(cfg, seed=seed)
