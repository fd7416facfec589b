"""Pydantic request/response models for the simulation service."""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field

from .. import harness
from ..training import ModelSpec, SynthSpec, TrainConfig


class HealthResponse(BaseModel):
    status: str = "ok"


class EpsilonResponse(BaseModel):
    p: int
    epsilon: float
    delta: float = 0.0


class VerifyResponse(BaseModel):
    p: int
    max_ratio: str
    bound: str
    passed: bool
    epsilon: float


class OverheadResponse(BaseModel):
    method: str
    p: int
    params: int
    uplink_bits_per_node_per_round: int
    reduction_factor: float
    reduction_factor_exact: str
    padded_payload_bits: int


class ModelSpecModel(BaseModel):
    kind: Literal["logistic_regression", "mlp_one_hidden"] = "logistic_regression"
    input_dim: int = 2
    num_classes: int = 2
    hidden_dim: Optional[int] = None


class SynthDatasetModel(BaseModel):
    kind: Literal["synth"] = "synth"
    clusters: int = 2
    dims: int = 2
    samples: int = 1240
    spread: float = 1.0


class IdxDatasetModel(BaseModel):
    kind: Literal["idx"]
    images: str
    labels: str


class TrainModel(BaseModel):
    learning_rate: float = 0.1
    batch_size: int = 16


class SimulateRequest(BaseModel):
    method: Literal["twobit", "fedavg", "dp_fedavg", "standalone"] = "twobit"
    n: int = 31
    p: int = 32
    e: int = 10
    rounds: int = 50
    seed: int = 0
    m_initial: float = 1.0
    m_mode: Literal["monotone", "adaptive"] = "monotone"
    m_floor: float = 1e-6
    noise_sigma: float = 0.0
    clip_norm: float = 1.0
    payload: Literal["delta", "weights"] = "delta"
    parallel: bool = False
    train_fraction: float = 0.8
    model: ModelSpecModel = Field(default_factory=ModelSpecModel)
    dataset: Union[SynthDatasetModel, IdxDatasetModel] = Field(
        default_factory=SynthDatasetModel, discriminator="kind"
    )
    train: TrainModel = Field(default_factory=TrainModel)


class RoundMetricsModel(BaseModel):
    round: int
    accuracy: float
    uplink_bits: int
    m: Optional[float] = None
    recon_err_mean: Optional[float] = None
    recon_err_max: Optional[float] = None


class SimulateResponse(BaseModel):
    method: str
    rounds: int
    final_accuracy: float
    metrics: list[RoundMetricsModel]


def request_to_config(req: SimulateRequest) -> harness.SimulationConfig:
    """Translate a simulate request into the library's config object."""
    model = ModelSpec(
        kind=req.model.kind,
        input_dim=req.model.input_dim,
        num_classes=req.model.num_classes,
        hidden_dim=req.model.hidden_dim,
    )
    if isinstance(req.dataset, SynthDatasetModel):
        dataset = SynthSpec(
            clusters=req.dataset.clusters,
            dims=req.dataset.dims,
            samples=req.dataset.samples,
            spread=req.dataset.spread,
        )
    else:
        dataset = harness.IdxSpec(images=req.dataset.images, labels=req.dataset.labels)
    train = TrainConfig(
        local_epochs=req.e,
        learning_rate=req.train.learning_rate,
        batch_size=req.train.batch_size,
    )
    return harness.SimulationConfig(
        method=req.method,
        n=req.n,
        p=req.p,
        e=req.e,
        rounds=req.rounds,
        seed=req.seed,
        m_initial=req.m_initial,
        m_mode=req.m_mode,
        m_floor=req.m_floor,
        noise_sigma=req.noise_sigma,
        clip_norm=req.clip_norm,
        payload=req.payload,
        parallel=req.parallel,
        train_fraction=req.train_fraction,
        model=model,
        dataset=dataset,
        train=train,
    )


def config_to_request(cfg: harness.SimulationConfig) -> SimulateRequest:
    """Translate a library config into a simulate request (CLI side)."""
    model = ModelSpecModel(
        kind=cfg.model.kind,
        input_dim=cfg.model.input_dim,
        num_classes=cfg.model.num_classes,
        hidden_dim=cfg.model.hidden_dim,
    )
    if isinstance(cfg.dataset, SynthSpec):
        dataset: Union[SynthDatasetModel, IdxDatasetModel] = SynthDatasetModel(
            clusters=cfg.dataset.clusters,
            dims=cfg.dataset.dims,
            samples=cfg.dataset.samples,
            spread=cfg.dataset.spread,
        )
    else:
        dataset = IdxDatasetModel(kind="idx", images=cfg.dataset.images, labels=cfg.dataset.labels)
    return SimulateRequest(
        method=cfg.method,
        n=cfg.n,
        p=cfg.p,
        e=cfg.e,
        rounds=cfg.rounds,
        seed=cfg.seed,
        m_initial=cfg.m_initial,
        m_mode=cfg.m_mode,
        m_floor=cfg.m_floor,
        noise_sigma=cfg.noise_sigma,
        clip_norm=cfg.clip_norm,
        payload=cfg.payload,
        parallel=cfg.parallel,
        train_fraction=cfg.train_fraction,
        model=model,
        dataset=dataset,
        train=TrainModel(
            learning_rate=cfg.train.learning_rate, batch_size=cfg.train.batch_size
        ),
    )


def metrics_to_models(metrics) -> list[RoundMetricsModel]:
    return [
        RoundMetricsModel(
            round=m.round,
            accuracy=m.accuracy,
            uplink_bits=m.uplink_bits,
            m=m.m,
            recon_err_mean=m.recon_err_mean,
            recon_err_max=m.recon_err_max,
        )
        for m in metrics
    ]


def models_to_metrics(models: list[RoundMetricsModel]) -> list[harness.RoundMetrics]:
    return [
        harness.RoundMetrics(
            round=m.round,
            accuracy=m.accuracy,
            uplink_bits=m.uplink_bits,
            m=m.m,
            recon_err_mean=m.recon_err_mean,
            recon_err_max=m.recon_err_max,
        )
        for m in models
    ]
