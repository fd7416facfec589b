"""Thin command-line client for the simulation service.

Every subcommand issues an HTTP request: against a remote server when
--server is given, otherwise against an in-process instance of the app
over an ASGI transport (no daemon needed, same wire schemas). `serve`
starts the service under uvicorn.
"""

from __future__ import annotations

import argparse
import asyncio
import sys

import httpx

from .harness import emit_metrics, load_config, with_seed
from .service.schemas import RoundMetricsModel, config_to_request, models_to_metrics


def _client(server: str | None) -> httpx.AsyncClient:
    if server:
        return httpx.AsyncClient(base_url=server, timeout=600.0)
    from .service.app import create_app

    transport = httpx.ASGITransport(app=create_app())
    return httpx.AsyncClient(transport=transport, base_url="http://twobitfed", timeout=600.0)


async def _get(server: str | None, path: str, params: dict) -> dict:
    async with _client(server) as client:
        response = await client.get(path, params=params)
        response.raise_for_status()
        return response.json()


async def _post(server: str | None, path: str, body: dict) -> dict:
    async with _client(server) as client:
        response = await client.post(path, json=body)
        response.raise_for_status()
        return response.json()


def _cmd_epsilon(args) -> int:
    data = asyncio.run(_get(args.server, "/privacy/epsilon", {"p": args.p}))
    print(f"p={data['p']} epsilon={data['epsilon']:.6f} delta={data['delta']:g}")
    return 0


def _cmd_verify_dp(args) -> int:
    data = asyncio.run(_get(args.server, "/privacy/verify", {"p": args.p}))
    status = "PASS" if data["passed"] else "FAIL"
    print(
        f"p={data['p']} max-ratio={data['max_ratio']} bound={data['bound']}"
        f" epsilon={data['epsilon']:.6f} {status}"
    )
    return 0 if data["passed"] else 1


def _cmd_overhead(args) -> int:
    params = {"p": args.p, "params": args.params, "method": args.method}
    data = asyncio.run(_get(args.server, "/overhead", params))
    print(
        f"method={data['method']} p={data['p']} params={data['params']}"
        f" uplink_bits={data['uplink_bits_per_node_per_round']}"
        f" reduction_factor={data['reduction_factor_exact']}"
        f" padded_bits={data['padded_payload_bits']}"
    )
    return 0


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    request = config_to_request(cfg)
    data = asyncio.run(_post(args.server, "/simulate", request.model_dump()))
    rows = models_to_metrics([RoundMetricsModel(**m) for m in data["metrics"]])
    if args.out:
        emit_metrics(rows, args.out, fmt=args.format)
    print(
        f"method={data['method']} rounds={data['rounds']}"
        f" final_accuracy={data['final_accuracy']:.4f}"
        + (f" wrote={args.out}" if args.out else "")
    )
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("twobitfed.service.app:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twobitfed", description="Two-bit federated aggregation client"
    )
    parser.add_argument("--server", help="base URL of a running service (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eps = sub.add_parser("epsilon", help="print the mechanism's epsilon for a width")
    p_eps.add_argument("--p", type=int, required=True)
    p_eps.set_defaults(func=_cmd_epsilon)

    p_ver = sub.add_parser("verify-dp", help="verify the epsilon bound by exact enumeration")
    p_ver.add_argument("--p", type=int, required=True)
    p_ver.set_defaults(func=_cmd_verify_dp)

    p_ovh = sub.add_parser("overhead", help="report per-node uplink cost")
    p_ovh.add_argument("--p", type=int, required=True)
    p_ovh.add_argument("--params", type=int, required=True)
    p_ovh.add_argument("--method", default="twobit", choices=["twobit", "fedavg", "dp_fedavg"])
    p_ovh.set_defaults(func=_cmd_overhead)

    p_sim = sub.add_parser("simulate", help="run a federated simulation from a config file")
    p_sim.add_argument("--config", required=True, help="key/value config file")
    p_sim.add_argument("--out", help="write per-round metrics to this path")
    p_sim.add_argument("--format", default="csv", choices=["csv", "kv"])
    p_sim.add_argument("--seed", type=int, help="override the config seed")
    p_sim.set_defaults(func=_cmd_simulate)

    p_srv = sub.add_parser("serve", help="run the HTTP service")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)
    p_srv.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except httpx.HTTPStatusError as exc:
        detail = exc.response.text
        print(f"error: {exc.response.status_code} {detail}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
