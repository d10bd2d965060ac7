"""Command-line entry points.

    crossfl serve             run the backend HTTP service
    crossfl deploy PKG        upload a model package
    crossfl client            run one FL client to completion
    crossfl demo              full two-task, two-version demo run
    crossfl telemetry-report  per-platform wall-time summary
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import requests

from ..backend import BackendConfig, start_http_server
from ..client_runtime import ClientProfile, run_client
from . import datasets
from .demo import DemoConfig, demo_run


def _env(name: str, default):
    return os.environ.get(f"CROSSFL_{name}", default)


def _add_backend_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--backend", default=_env("BACKEND", "http://127.0.0.1:8080"),
        help="backend base URL",
    )


def _port_range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    return int(lo), int(hi)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crossfl")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the backend")
    serve.add_argument("--host", default=_env("HOST", "127.0.0.1"))
    serve.add_argument("--http-port", type=int, default=int(_env("HTTP_PORT", 8080)))
    serve.add_argument("--data-dir", default=_env("DATA_DIR", "./crossfl-data"))
    serve.add_argument("--port-range", type=_port_range,
                       default=_port_range(_env("PORT_RANGE", "9100:9199")))
    serve.add_argument("--rounds", type=int, default=10)
    serve.add_argument("--min-clients", type=int, default=2)
    serve.add_argument("--epochs", type=int, default=2)
    serve.add_argument("--batch-size", type=int, default=16)
    serve.add_argument("--lr", type=float, default=0.05)
    serve.add_argument("--round-timeout", type=float,
                       default=float(_env("ROUND_TIMEOUT", 60.0)))

    deploy = sub.add_parser("deploy", help="upload a package")
    deploy.add_argument("package", help="path to a .pkg file")
    _add_backend_arg(deploy)

    client = sub.add_parser("client", help="run one FL client")
    _add_backend_arg(client)
    client.add_argument("--platform", required=True,
                        choices=["index_map", "layer_tree"])
    client.add_argument("--data-type", required=True)
    client.add_argument("--shard", required=True, help="shard CSV file")
    client.add_argument("--client-id", default="client_cli")
    client.add_argument("--speed-factor", type=float, default=1.0)
    client.add_argument("--device", default="cli-device")
    client.add_argument("--ram", default="")
    client.add_argument("--seed", type=int, default=0)

    demo = sub.add_parser("demo", help="run the full demo")
    demo.add_argument("--seed", type=int, default=7)
    demo.add_argument("--rounds", type=int, default=10)
    demo.add_argument("--clients", type=int, default=2)
    demo.add_argument("--examples", type=int, default=200,
                      help="examples per client")
    demo.add_argument("--out", default="artifacts")
    demo.add_argument("--data-dir", default=None)
    demo.add_argument("--port-range", type=_port_range, default=(9100, 9199))

    report = sub.add_parser("telemetry-report", help="summarize telemetry")
    _add_backend_arg(report)
    report.add_argument("--platform", default=None)

    return parser


def cmd_serve(args) -> int:
    config = BackendConfig(
        data_dir=args.data_dir,
        host=args.host,
        http_port=args.http_port,
        port_range=args.port_range,
        rounds=args.rounds,
        min_clients=args.min_clients,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        round_timeout_s=args.round_timeout,
    )
    server, _, thread = start_http_server(config)
    print(f"backend listening on {server.url} (data: {args.data_dir})", flush=True)
    try:
        thread.join()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def cmd_deploy(args) -> int:
    with open(args.package, "rb") as fp:
        data = fp.read()
    resp = requests.post(f"{args.backend}/api/models", data=data, timeout=60.0)
    print(json.dumps(resp.json(), indent=2))
    return 0 if resp.status_code == 201 else 1


def cmd_client(args) -> int:
    profile = ClientProfile(
        client_id=args.client_id,
        platform=args.platform,
        speed_factor=args.speed_factor,
        device=args.device,
        ram=args.ram,
    )
    shard = datasets.load_shard_csv(args.shard)
    report = run_client(profile, args.backend, args.data_type, shard, base_seed=args.seed)
    print(json.dumps(dataclasses.asdict(report), indent=2))
    return 0 if report.status == "finished" else 1


def cmd_demo(args) -> int:
    config = DemoConfig(
        seed=args.seed,
        rounds=args.rounds,
        clients=args.clients,
        examples_per_client=args.examples,
        out_dir=args.out,
        data_dir=args.data_dir,
        port_range=args.port_range,
    )
    result = demo_run(config)
    if result.ok:
        print(f"demo ok in {result.elapsed_s:.1f}s: {result.losses_path}, "
              f"{result.telemetry_path}")
    else:
        print(f"demo FAILED: {result.failed}", file=sys.stderr)
    return result.exit_code


def cmd_telemetry_report(args) -> int:
    params = {"platform": args.platform} if args.platform else {}
    resp = requests.get(f"{args.backend}/api/telemetry", params=params, timeout=30.0)
    resp.raise_for_status()
    records = resp.json()
    if not records:
        print("no telemetry recorded")
        return 0
    by_platform: dict[str, list[float]] = {}
    for record in records:
        by_platform.setdefault(record["platform"], []).append(record["wall_time_s"])
    print(f"{'platform':<12} {'rounds':>6} {'mean wall (s)':>14}")
    means = {}
    for platform, times in sorted(by_platform.items()):
        means[platform] = sum(times) / len(times)
        print(f"{platform:<12} {len(times):>6} {means[platform]:>14.4f}")
    if len(means) == 2:
        slow, fast = max(means.values()), min(means.values())
        if fast > 0:
            print(f"speed ratio: {slow / fast:.2f}x")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    handlers = {
        "serve": cmd_serve,
        "deploy": cmd_deploy,
        "client": cmd_client,
        "demo": cmd_demo,
        "telemetry-report": cmd_telemetry_report,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
