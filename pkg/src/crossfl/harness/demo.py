"""Orchestration: full live-demo reproduction and single-run helpers.

demo_run stands up a backend, deploys a v1 model per task, trains it across
heterogeneous clients (one per platform layout, distinct speed factors),
redeploys a widened v2 with the clients unchanged, retrains, and writes
losses.csv / telemetry.csv. Any failed assertion is named in the result.
"""

from __future__ import annotations

import csv
import json
import logging
import sys
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from ..backend import BackendConfig, start_http_server
from ..client_runtime import ClientProfile, ClientReport, run_client
from ..model_package import ParameterSet, digest_parameters
from ..seeding import derive_seed
from ..trainer import DataShard
from . import datasets, modelgen

logger = logging.getLogger(__name__)

DEFAULT_SPEED_FACTORS = (5.46, 1.0)
DEFAULT_PLATFORMS = ("index_map", "layer_tree")
_DEVICE_OF = {"index_map": "emu-handset-a", "layer_tree": "emu-handset-b"}
_RAM_OF = {"index_map": "8GB", "layer_tree": "4GB"}


@dataclass
class DemoConfig:
    seed: int = 7
    rounds: int = 10
    clients: int = 2
    epochs: int = 2
    batch_size: int = 16
    learning_rate: float = 0.05
    examples_per_client: int = 200
    out_dir: str = "artifacts"
    data_dir: str | None = None
    port_range: tuple[int, int] = (9100, 9199)
    platforms: tuple[str, ...] = DEFAULT_PLATFORMS
    speed_factors: tuple[float, ...] = DEFAULT_SPEED_FACTORS
    tasks: tuple[str, ...] = (datasets.BLOBS, datasets.SLEEP)
    round_timeout_s: float = 60.0


@dataclass
class DemoResult:
    ok: bool
    failed: str = ""
    loss_rows: list[dict] = field(default_factory=list)
    telemetry_rows: list[dict] = field(default_factory=list)
    losses_path: str = ""
    telemetry_path: str = ""
    elapsed_s: float = 0.0

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1


@dataclass
class RunOutcome:
    rows: list[dict]
    reports: list[ClientReport]
    final_params: ParameterSet
    final_digest: str
    session_id: str


def _profiles(config_platforms, speed_factors, count) -> list[ClientProfile]:
    profiles = []
    for i in range(count):
        platform = config_platforms[i % len(config_platforms)]
        profiles.append(ClientProfile(
            client_id=f"client_{i}",
            platform=platform,
            speed_factor=speed_factors[i % len(speed_factors)],
            device=_DEVICE_OF.get(platform, "emu-device"),
            ram=_RAM_OF.get(platform, ""),
        ))
    return profiles


def run_clients(
    backend_url: str,
    data_type: str,
    shards: list[DataShard],
    profiles: list[ClientProfile],
    base_seeds: list[int],
    use_platform_layout: bool = True,
) -> list[ClientReport]:
    """Run one client per shard concurrently; raises if any client raises."""
    # Fine GIL slices keep one thread's bursts from lumping into another
    # thread's measured training window.
    sys.setswitchinterval(0.0002)
    reports: list[ClientReport | None] = [None] * len(profiles)
    errors: list[BaseException | None] = [None] * len(profiles)

    def worker(i: int) -> None:
        try:
            reports[i] = run_client(
                profiles[i], backend_url, data_type, shards[i],
                base_seed=base_seeds[i], use_platform_layout=use_platform_layout,
            )
        except BaseException as exc:  # surfaced to the caller below
            errors[i] = exc

    threads = [
        threading.Thread(target=worker, args=(i,), name=f"client-{p.client_id}", daemon=True)
        for i, p in enumerate(profiles)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for i, exc in enumerate(errors):
        if exc is not None:
            raise exc
    return [r for r in reports if r is not None]


def _session_rows(backend, session_id: str) -> list[dict]:
    log_path = backend.registry.sessions_dir / f"{session_id}.log"
    rows = []
    for line in log_path.read_text(encoding="utf-8").splitlines():
        doc = json.loads(line)
        if "round" in doc:
            rows.append(doc)
    return rows


def _launch(config: DemoConfig, data_dir: str, min_clients: int):
    backend_config = BackendConfig(
        data_dir=data_dir,
        host="127.0.0.1",
        http_port=0,
        port_range=config.port_range,
        rounds=config.rounds,
        min_clients=min_clients,
        epochs=config.epochs,
        batch_size=config.batch_size,
        learning_rate=config.learning_rate,
        round_timeout_s=config.round_timeout_s,
    )
    return start_http_server(backend_config)


def _upload(url: str, package: bytes) -> dict:
    resp = requests.post(f"{url}/api/models", data=package, timeout=30.0)
    resp.raise_for_status()
    return resp.json()


def _spec_for_task(task_kind: str, config: DemoConfig) -> dict:
    if task_kind == datasets.BLOBS:
        return modelgen.blobs_spec(seed=derive_seed(config.seed, 1))
    return modelgen.sleep_spec(seed=derive_seed(config.seed, 2))


def single_model_run(
    task_kind: str,
    data_dir: str,
    config: DemoConfig | None = None,
    use_platform_layout: bool = True,
    partition: str = "iid",
) -> RunOutcome:
    """Deploy one model, run one full session, and collect everything.

    The numeric trajectory is a pure function of config.seed (and the task),
    so two calls differing only in platform layouts must produce identical
    rows and final parameters.
    """
    config = config or DemoConfig()
    server, backend, _ = _launch(config, data_dir, min_clients=config.clients)
    try:
        spec = _spec_for_task(task_kind, config)
        _upload(server.url, modelgen.package_bytes_from_spec(spec))
        task = datasets.SyntheticTask(
            kind=task_kind,
            n_examples=config.clients * config.examples_per_client,
            seed=derive_seed(config.seed, 3),
        )
        shards = datasets.generate_shards(task, config.clients, partition)
        profiles = _profiles(config.platforms, config.speed_factors, config.clients)
        base_seeds = [derive_seed(config.seed, 100 + i) for i in range(config.clients)]
        reports = run_clients(
            server.url, spec["data_type"], shards, profiles, base_seeds,
            use_platform_layout=use_platform_layout,
        )
        session_id = reports[0].session_id
        record = backend.registry.get(spec["name"], spec["version"])
        final = backend.registry.current_params(record)
        return RunOutcome(
            rows=_session_rows(backend, session_id),
            reports=reports,
            final_params=final,
            final_digest=digest_parameters(final),
            session_id=session_id,
        )
    finally:
        server.shutdown()
        server.server_close()


def demo_run(config: DemoConfig | None = None) -> DemoResult:
    """The two live demos at desk scale: deploy, train, redeploy v2, retrain."""
    config = config or DemoConfig()
    started = time.perf_counter()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    loss_rows: list[dict] = []
    telemetry_rows: list[dict] = []
    tmp = None
    if config.data_dir is None:
        tmp = tempfile.TemporaryDirectory(prefix="crossfl-demo-")
        data_dir = tmp.name
    else:
        data_dir = config.data_dir

    result = DemoResult(ok=True)
    server, backend, _ = _launch(config, data_dir, min_clients=config.clients)
    try:
        for task_kind in config.tasks:
            spec_v1 = _spec_for_task(task_kind, config)
            task = datasets.SyntheticTask(
                kind=task_kind,
                n_examples=config.clients * config.examples_per_client,
                seed=derive_seed(config.seed, 3),
            )
            shards = datasets.generate_shards(task, config.clients, "iid")
            profiles = _profiles(config.platforms, config.speed_factors, config.clients)
            base_seeds = [derive_seed(config.seed, 100 + i) for i in range(config.clients)]

            specs = {"v1": spec_v1, "v2": modelgen.widen_spec(
                spec_v1, hidden=spec_v1["layers"][0]["output_dim"] + 8
            )}
            for phase, spec in specs.items():
                _upload(server.url, modelgen.package_bytes_from_spec(spec))
                logger.info("deployed %s v%d (%s phase %s)",
                            spec["name"], spec["version"], task_kind, phase)
                reports = run_clients(
                    server.url, spec["data_type"], shards, profiles, base_seeds,
                )
                session_id = reports[0].session_id
                rows = _session_rows(backend, session_id)

                for report in reports:
                    if report.status != "finished":
                        result.ok = False
                        result.failed = (
                            f"client_finished[{task_kind}/{phase}]: "
                            f"{report.client_id} ended {report.status}: {report.failure}"
                        )
                        return result
                    if report.model_version != spec["version"]:
                        result.ok = False
                        result.failed = (
                            f"version_pickup[{task_kind}/{phase}]: {report.client_id} "
                            f"trained v{report.model_version}, expected v{spec['version']}"
                        )
                        return result
                    logger.info(
                        "client %s picked up %s v%d for %s/%s",
                        report.client_id, report.model_name, report.model_version,
                        task_kind, phase,
                    )

                if len(rows) != config.rounds:
                    result.ok = False
                    result.failed = (
                        f"round_count[{task_kind}/{phase}]: {len(rows)} rows, "
                        f"expected {config.rounds}"
                    )
                    return result
                first, last = rows[0]["eval_loss"], rows[-1]["eval_loss"]
                if not last < 0.5 * first:
                    result.ok = False
                    result.failed = (
                        f"loss_halving[{task_kind}/{phase}]: round-{config.rounds} loss "
                        f"{last:.6f} not < 0.5 * round-1 loss {first:.6f}"
                    )
                    return result

                for row in rows:
                    loss_rows.append({
                        "task": task_kind,
                        "phase": phase,
                        "round": row["round"],
                        "eval_loss": row["eval_loss"],
                        "eval_metric": row["eval_metric"],
                    })
                for doc in backend.list_telemetry(session_id=session_id):
                    telemetry_rows.append({"task": task_kind, "phase": phase, **doc})
    finally:
        server.shutdown()
        server.server_close()
        result.elapsed_s = time.perf_counter() - started
        result.loss_rows = loss_rows
        result.telemetry_rows = telemetry_rows
        losses_path = out_dir / "losses.csv"
        telemetry_path = out_dir / "telemetry.csv"
        _write_csv(losses_path, ["task", "phase", "round", "eval_loss", "eval_metric"], loss_rows)
        _write_csv(
            telemetry_path,
            ["task", "phase", "client_id", "platform", "device", "round",
             "wall_time_s", "ram", "session_id"],
            telemetry_rows,
        )
        result.losses_path = str(losses_path)
        result.telemetry_path = str(telemetry_path)
        if tmp is not None:
            tmp.cleanup()
    return result


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c, "")) for c in columns])


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)
