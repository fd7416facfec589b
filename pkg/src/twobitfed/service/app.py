"""FastAPI app exposing the simulator and its analysis endpoints."""

from __future__ import annotations

from fractions import Fraction

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse

from ..privacy import MAX_ENUM_WIDTH, epsilon_theoretical, worst_case_ratio
from ..protocol import uplink_overhead
from ..harness import run_simulation
from .schemas import (
    EpsilonResponse,
    HealthResponse,
    OverheadResponse,
    SimulateRequest,
    SimulateResponse,
    VerifyResponse,
    metrics_to_models,
    request_to_config,
)


def create_app() -> FastAPI:
    app = FastAPI(title="twobitfed", description="Two-bit federated aggregation service")

    @app.exception_handler(ValueError)
    async def value_error_handler(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(IndexError)
    async def index_error_handler(request: Request, exc: IndexError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse()

    @app.get("/privacy/epsilon", response_model=EpsilonResponse)
    def epsilon(p: int = Query(ge=3)):
        return EpsilonResponse(p=p, epsilon=epsilon_theoretical(p))

    @app.get("/privacy/verify", response_model=VerifyResponse)
    def verify(p: int = Query(ge=4, le=MAX_ENUM_WIDTH)):
        ratio = worst_case_ratio(p)
        bound = Fraction(p, p - 2)
        return VerifyResponse(
            p=p,
            max_ratio=str(ratio),
            bound=str(bound),
            passed=ratio == bound,
            epsilon=epsilon_theoretical(p),
        )

    @app.get("/overhead", response_model=OverheadResponse)
    def overhead(
        p: int = Query(ge=4),
        params: int = Query(ge=1),
        method: str = Query(default="twobit"),
    ):
        report = uplink_overhead(method, p, params)
        return OverheadResponse(
            method=report.method,
            p=p,
            params=params,
            uplink_bits_per_node_per_round=report.uplink_bits_per_node_per_round,
            reduction_factor=float(report.reduction_factor),
            reduction_factor_exact=str(report.reduction_factor),
            padded_payload_bits=report.padded_payload_bits,
        )

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest):
        cfg = request_to_config(req)
        metrics = run_simulation(cfg)
        return SimulateResponse(
            method=cfg.method,
            rounds=cfg.rounds,
            final_accuracy=metrics[-1].accuracy,
            metrics=metrics_to_models(metrics),
        )

    return app


app = create_app()
