"""Device-side workflow: model request, FL server setup, FL training.

A client asks the backend for the latest model matching its platform and
data type, materializes the platform's parameter layout, and follows the
framed session protocol: train with the hyperparameters each round carries,
push every parameter transfer through the platform layout (even though
numerically redundant, so the cross-platform path runs on every round),
answer eval requests, and post one telemetry record per round.
"""

from __future__ import annotations

import logging
import socket
import statistics
import threading
import time
from dataclasses import dataclass, field

import requests

from . import fl_protocol as proto
from . import param_space
from .errors import (
    BackendUnreachable,
    NoModelForDataType,
    ProtocolError,
    SessionRejected,
)
from .model_package import (
    PLATFORMS,
    ParameterSet,
    decode_tensors,
    encode_tensors,
    read_variant_bundle,
    schema_digest,
)
from .seeding import derive_seed
from .trainer import DataShard, MlpModel, TrainConfig

logger = logging.getLogger(__name__)

_MAX_RETRIES = 3
_BACKOFF_S = 0.2
_HTTP_TIMEOUT_S = 30.0

# In-process clients emulate independent devices; they take turns through
# this gate for the measured train+delay region so one client's telemetry
# never absorbs another thread's CPU time.
_TRAIN_GATE = threading.Lock()


@dataclass(frozen=True)
class ClientProfile:
    client_id: str
    platform: str
    speed_factor: float = 1.0
    device: str = ""
    ram: str = ""

    def __post_init__(self):
        if self.platform not in PLATFORMS:
            raise ValueError(f"platform must be one of {PLATFORMS}, got {self.platform!r}")
        if not self.speed_factor > 0:
            raise ValueError(f"speed_factor must be > 0, got {self.speed_factor}")


@dataclass
class RoundResult:
    round: int
    train_loss: float = 0.0
    eval_loss: float = 0.0
    eval_metric: float = 0.0
    wall_time_s: float = 0.0


@dataclass
class ClientReport:
    client_id: str
    platform: str
    model_name: str = ""
    model_version: int = 0
    session_id: str = ""
    status: str = "failed"
    failure: str = ""
    rounds: list[RoundResult] = field(default_factory=list)
    telemetry_posted: int = 0
    layout_reads: int = 0
    layout_writes: int = 0


def round_seed(base_seed: int, round_index: int) -> int:
    """Per-round training seed; deterministic in (base_seed, round)."""
    return derive_seed(base_seed, round_index)


def _precise_wait(duration_s: float) -> None:
    """Sleep-then-spin so the waited time tracks the target closely."""
    if duration_s <= 0:
        return
    end = time.perf_counter() + duration_s
    while True:
        remaining = end - time.perf_counter()
        if remaining <= 0:
            return
        if remaining > 0.0005:
            time.sleep(remaining - 0.0005)


def _warm_core(duration_s: float = 0.002) -> None:
    """Busy-spin briefly so the measured window starts on a warm core.

    Without this the first client of each round trains right after an idle
    gap and measures slower than one training after a busy period, which
    skews the cross-client wall-time ratio.
    """
    end = time.perf_counter() + duration_s
    x = 1.0
    while time.perf_counter() < end:
        x = x * 1.0000001 + 1e-9


def _get_with_retries(session: requests.Session, url: str, **kwargs):
    """GET with bounded exponential backoff; no retry storm on a dead backend."""
    delay = _BACKOFF_S
    for attempt in range(_MAX_RETRIES + 1):
        try:
            return session.get(url, timeout=_HTTP_TIMEOUT_S, **kwargs)
        except requests.ConnectionError as exc:
            if attempt == _MAX_RETRIES:
                raise BackendUnreachable(f"GET {url}: {exc}") from exc
            time.sleep(delay)
            delay *= 2


class _PlatformState:
    """Holds the client's in-memory platform representation of the model.

    Every transfer in either direction goes through the layout, and the
    instance counts those conversions so tests can assert the navigation
    machinery actually ran.
    """

    def __init__(self, platform: str, schema, initial: ParameterSet, enabled: bool):
        self.platform = platform
        self.schema = schema
        self.enabled = enabled
        self.reads = 0
        self.writes = 0
        if enabled and platform == "layer_tree":
            self._tree = param_space.layer_tree_from_schema(schema, initial)

    def through(self, params: ParameterSet) -> ParameterSet:
        """Write params into the platform layout, then read them back."""
        if not self.enabled:
            return params
        if self.platform == "layer_tree":
            self._tree = param_space.set_in_layer_tree(self._tree, params, self.schema)
            self.writes += 1
            out = param_space.from_layer_tree(self._tree, self.schema)
            self.reads += 1
            return out
        layout = param_space.to_index_map(params, self.schema)
        self.writes += 1
        out = param_space.from_index_map(layout, self.schema)
        self.reads += 1
        return out


def run_client(
    profile: ClientProfile,
    backend_url: str,
    data_type: str,
    shard: DataShard,
    base_seed: int = 0,
    use_platform_layout: bool = True,
) -> ClientReport:
    """Participate in one full FL session; returns the client's report.

    With use_platform_layout=False the layout round-trips are skipped and
    parameters stay in canonical form; the trained numbers must come out
    identical either way, which is exactly what the equivalence tests
    assert.
    """
    report = ClientReport(client_id=profile.client_id, platform=profile.platform)
    http = requests.Session()
    base = backend_url.rstrip("/")

    # -- model request ------------------------------------------------------
    resp = _get_with_retries(
        http, f"{base}/api/models",
        params={"data_type": data_type, "platform": profile.platform},
    )
    if resp.status_code == 404:
        raise NoModelForDataType(resp.json().get("detail", data_type))
    resp.raise_for_status()
    ad = resp.json()
    report.model_name, report.model_version = ad["name"], ad["version"]

    bundle_resp = _get_with_retries(http, f"{base}{ad['download_url']}")
    bundle_resp.raise_for_status()
    manifest, _, revision, params = read_variant_bundle(bundle_resp.content)
    digest = schema_digest(manifest.schema)
    if digest != ad["schema_digest"]:
        raise SessionRejected(
            f"downloaded schema digest {digest} != advertised {ad['schema_digest']}"
        )
    logger.info(
        "client %s got %s v%d revision %d (%s)",
        profile.client_id, manifest.name, manifest.version, revision, profile.platform,
    )

    state = _PlatformState(profile.platform, manifest.schema, params, use_platform_layout)
    model = MlpModel.from_manifest(manifest, state.through(params))

    # -- FL server setup ------------------------------------------------------
    train_resp = http.post(
        f"{base}/api/train",
        json={"name": manifest.name, "version": manifest.version},
        timeout=_HTTP_TIMEOUT_S,
    )
    train_resp.raise_for_status()
    grant = train_resp.json()
    report.session_id = grant["session_id"]
    host = base.split("://", 1)[1].split(":")[0].split("/")[0]

    # -- FL training ------------------------------------------------------------
    sock = socket.create_connection((host, grant["port"]), timeout=300.0)
    rfile = sock.makefile("rb")
    try:
        sock.sendall(proto.encode_frame(proto.Join(
            client_id=profile.client_id,
            model_name=manifest.name,
            model_version=manifest.version,
            platform=profile.platform,
            schema_digest=digest,
        )))
        started_training = False
        results: dict[int, RoundResult] = {}
        trained_history: list[float] = []
        while True:
            try:
                message = proto.read_frame(rfile)
            except (ProtocolError, OSError) as exc:
                report.failure = f"transport error: {exc}"
                return report
            if message is None:
                report.failure = "server closed the connection"
                return report

            if isinstance(message, proto.Abort):
                if not started_training:
                    raise SessionRejected(message.reason)
                report.failure = f"aborted: {message.reason}"
                return report

            if isinstance(message, proto.Finish):
                report.status = "finished"
                report.rounds = [results[r] for r in sorted(results)]
                report.layout_reads = state.reads
                report.layout_writes = state.writes
                return report

            if isinstance(message, proto.GlobalParams):
                started_training = True
                # The whole round's local work happens inside the gate turn,
                # so the measured window holds only this client's own work;
                # the heterogeneity delay then stretches the round toward
                # speed_factor x this client's measured training time. The
                # delay basis is the running median of those measurements:
                # a host scheduling stall is noise of the host, not of the
                # device being emulated, and must not scale 5x.
                with _TRAIN_GATE:
                    incoming = decode_tensors(message.body, manifest.schema)
                    config = TrainConfig(
                        epochs=message.epochs,
                        batch_size=min(message.batch_size, shard.num_examples),
                        learning_rate=message.learning_rate,
                        seed=round_seed(base_seed, message.round),
                    )
                    model.restore(state.through(incoming))
                    _warm_core()
                    t0 = time.perf_counter()
                    stats = model.train(shard, config)
                    trained = time.perf_counter() - t0
                    trained_history.append(trained)
                    basis = statistics.median(trained_history)
                    _precise_wait((profile.speed_factor - 1.0) * basis)
                    wall = time.perf_counter() - t0

                    outgoing = state.through(model.parameters())
                    sock.sendall(proto.encode_frame(proto.LocalUpdate(
                        round=message.round,
                        num_examples=shard.num_examples,
                        train_loss=stats.per_epoch_loss[-1],
                        wall_time_s=wall,
                        body=encode_tensors(outgoing),
                    )))
                    results[message.round] = RoundResult(
                        round=message.round,
                        train_loss=stats.per_epoch_loss[-1],
                        wall_time_s=wall,
                    )
                    self_doc = {
                        "client_id": profile.client_id,
                        "platform": profile.platform,
                        "device": profile.device,
                        "round": message.round,
                        "wall_time_s": wall,
                        "ram": profile.ram,
                        "session_id": report.session_id,
                    }
                    try:
                        tele = http.post(
                            f"{base}/api/telemetry", json=self_doc, timeout=_HTTP_TIMEOUT_S
                        )
                        if tele.ok:
                            report.telemetry_posted += 1
                    except requests.RequestException as exc:
                        logger.warning("telemetry post failed: %s", exc)

            elif isinstance(message, proto.EvalRequest):
                incoming = decode_tensors(message.body, manifest.schema)
                model.restore(state.through(incoming))
                loss, metric = model.evaluate(shard)
                sock.sendall(proto.encode_frame(proto.EvalReply(
                    round=message.round,
                    num_examples=shard.num_examples,
                    loss=loss,
                    metric=metric,
                )))
                if message.round in results:
                    results[message.round].eval_loss = loss
                    results[message.round].eval_metric = metric
            else:
                report.failure = f"unexpected message {type(message).__name__}"
                return report
    finally:
        report.layout_reads = state.reads
        report.layout_writes = state.writes
        try:
            rfile.close()
            sock.close()
        except OSError:
            pass
