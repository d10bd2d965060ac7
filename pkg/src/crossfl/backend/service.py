"""Backend facade: model delivery, reuse-or-spawn session management, telemetry.

FL servers run as in-process threads, each bound to its own port from the
configured range. The observable contract is the same as launching separate
processes: distinct ports, independent lifecycles, shared registry.
"""

from __future__ import annotations

import dataclasses
import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone

from ..errors import (
    NoModelForDataType,
    PortRangeExhausted,
    PortUnavailable,
    SessionFailed,
)
from ..fl_server import (
    STATUS_FAILED,
    STATUS_RUNNING,
    STATUS_WAITING,
    SessionConfig,
    SessionServer,
)
from ..model_package import PLATFORMS, schema_digest, write_variant_bundle
from .registry import Registry, TelemetryRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BackendConfig:
    data_dir: str
    host: str = "127.0.0.1"
    http_port: int = 8080
    port_range: tuple[int, int] = (9100, 9199)
    rounds: int = 10
    min_clients: int = 2
    epochs: int = 2
    batch_size: int = 16
    learning_rate: float = 0.05
    round_timeout_s: float = 60.0


@dataclass
class SessionRecord:
    session_id: str
    model_name: str
    model_version: int
    port: int
    created_at: str
    server: SessionServer = field(repr=False, default=None)
    thread: threading.Thread = field(repr=False, default=None)
    final_status: str | None = None

    @property
    def status(self) -> str:
        if self.final_status is not None:
            return self.final_status
        return self.server.session_status()

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "name": self.model_name,
            "version": self.model_version,
            "port": self.port,
            "status": self.status,
            "round": self.server.current_round,
            "created_at": self.created_at,
        }


class Backend:
    def __init__(self, config: BackendConfig):
        self.config = config
        self.registry = Registry(config.data_dir)
        self._lock = threading.Lock()
        self._sessions: list[SessionRecord] = []
        self._latest: dict[tuple[str, int], SessionRecord] = {}
        self._session_seq = 0

    # -- model registry -----------------------------------------------------

    def upload_model(self, data: bytes) -> dict:
        record = self.registry.add_package(data)
        logger.info("registered %s v%d (%s)", record.name, record.version, record.data_type)
        return record.to_dict()

    def advertise_model(self, data_type: str, platform: str) -> dict:
        if platform not in PLATFORMS:
            raise NoModelForDataType(f"unknown platform {platform!r}")
        record = self.registry.latest_for(data_type, platform)
        if record is None:
            raise NoModelForDataType(
                f"no model for data_type={data_type!r} platform={platform!r}"
            )
        manifest = self.registry.manifest(record)
        return {
            "name": record.name,
            "version": record.version,
            "data_type": record.data_type,
            "revision": record.revision,
            "download_url": f"/api/models/{record.name}/{record.version}/{platform}",
            "schema_digest": schema_digest(manifest.schema),
            "architecture": [
                {"input_dim": l.input_dim, "output_dim": l.output_dim,
                 "activation": l.activation}
                for l in manifest.architecture
            ],
            "loss": manifest.loss,
        }

    def download_model(self, name: str, version: int, platform: str) -> bytes:
        """Variant bundle carrying the current parameter revision."""
        record = self.registry.get(name, version)
        manifest = self.registry.manifest(record)
        params = self.registry.current_params(record)
        return write_variant_bundle(manifest, platform, params, record.revision)

    # -- session manager -------------------------------------------------------

    def request_training(self, name: str, version: int) -> dict:
        """Reuse the live session for (name, version) or spawn a fresh one.

        Atomic under concurrent requests: the lookup, port allocation, and
        record insertion happen in one critical section, so simultaneous
        requests for one model always land on the same session.
        """
        record = self.registry.get(name, version)  # NotFound propagates
        with self._lock:
            existing = self._latest.get((name, version))
            if existing is not None and existing.status in (STATUS_WAITING, STATUS_RUNNING):
                return {"session_id": existing.session_id, "port": existing.port}

            manifest = self.registry.manifest(record)
            params = self.registry.current_params(record)
            self._session_seq += 1
            session_id = f"{name}-v{version}-s{self._session_seq:04d}"
            config = SessionConfig(
                model_name=name,
                model_version=version,
                rounds=self.config.rounds,
                min_clients=self.config.min_clients,
                epochs=self.config.epochs,
                batch_size=self.config.batch_size,
                learning_rate=self.config.learning_rate,
                port=0,  # overwritten by the scan below
                host=self.config.host,
                round_timeout_s=self.config.round_timeout_s,
                schema_digest=schema_digest(manifest.schema),
            )
            server = self._bind_in_range(config, params, manifest.schema, session_id)
            session = SessionRecord(
                session_id=session_id,
                model_name=name,
                model_version=version,
                port=server.port,
                created_at=datetime.now(timezone.utc).isoformat(),
                server=server,
            )
            session.thread = threading.Thread(
                target=self._run_session, args=(session,), daemon=True,
                name=f"fl-session-{session_id}",
            )
            self._sessions.append(session)
            self._latest[(name, version)] = session
            session.thread.start()
            logger.info("spawned session %s on port %d", session_id, server.port)
            return {"session_id": session_id, "port": server.port}

    def _bind_in_range(self, config, params, schema, session_id) -> SessionServer:
        lo, hi = self.config.port_range
        for port in range(lo, hi + 1):
            try:
                return SessionServer(
                    dataclasses.replace(config, port=port),
                    params,
                    schema,
                    registry=self.registry,
                    log_path=self.registry.sessions_dir / f"{session_id}.log",
                    session_id=session_id,
                )
            except PortUnavailable:
                continue
        raise PortRangeExhausted(f"no free port in {lo}..{hi}")

    def _run_session(self, session: SessionRecord) -> None:
        try:
            session.server.run()
        except SessionFailed as exc:
            logger.warning("session %s failed: %s", session.session_id, exc)
        except Exception:
            logger.exception("session %s crashed", session.session_id)
            session.final_status = STATUS_FAILED

    def sessions(self) -> list[dict]:
        with self._lock:
            return [s.to_dict() for s in self._sessions]

    # -- telemetry ---------------------------------------------------------------

    def ingest_telemetry(self, doc: dict) -> None:
        self.registry.append_telemetry(TelemetryRecord.from_dict(doc))

    def list_telemetry(self, **filters) -> list[dict]:
        return self.registry.list_telemetry(**filters)
