"""One FL training session: a port-bound server running synchronous rounds.

Lifecycle: wait for min_clients valid joins, then for each round broadcast
the global parameters, collect exactly one local update per admitted client,
aggregate, broadcast an eval request carrying the new global model, collect
eval replies, and log a round record. After the last round the final
parameters are persisted to the registry as a new parameter revision.

Any missing, mis-rounded, or malformed update fails the whole session: the
server broadcasts Abort and reports status "failed". Partial participation
is deliberately out of scope.
"""

from __future__ import annotations

import json
import logging
import queue
import socket
import threading
import time
from dataclasses import dataclass, field

from . import fl_protocol as proto
from .errors import (
    InvalidConfig,
    PortUnavailable,
    ProtocolError,
    RoundTimeout,
    SessionFailed,
)
from .model_package import (
    ParameterSchema,
    ParameterSet,
    decode_tensors,
    digest_parameters,
    encode_tensors,
)
from .param_space import WeightedUpdate, aggregate_weighted

logger = logging.getLogger(__name__)

STATUS_WAITING = "waiting"
STATUS_RUNNING = "running"
STATUS_FINISHED = "finished"
STATUS_FAILED = "failed"

_JOIN_READ_TIMEOUT_S = 10.0


@dataclass(frozen=True)
class SessionConfig:
    model_name: str
    model_version: int
    rounds: int
    min_clients: int = 2
    epochs: int = 2
    batch_size: int = 16
    learning_rate: float = 0.05
    port: int = 0  # 0 = pick an ephemeral port
    host: str = "127.0.0.1"
    round_timeout_s: float = 60.0
    schema_digest: str = ""

    def __post_init__(self):
        if self.rounds < 1:
            raise InvalidConfig(f"rounds must be >= 1, got {self.rounds}")
        if self.min_clients < 1:
            raise InvalidConfig(f"min_clients must be >= 1, got {self.min_clients}")


@dataclass
class RoundRecord:
    round: int
    participants: tuple[str, ...]
    train_loss: float  # example-weighted mean of client-reported train losses
    eval_loss: float
    eval_metric: float
    wall_times: dict[str, float] = field(default_factory=dict)
    client_train_loss: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "participants": list(self.participants),
            "train_loss": self.train_loss,
            "eval_loss": self.eval_loss,
            "eval_metric": self.eval_metric,
            "wall_times": self.wall_times,
            "client_train_loss": self.client_train_loss,
        }


class _ClientConn:
    def __init__(self, client_id: str, sock: socket.socket, rfile):
        self.client_id = client_id
        self.sock = sock
        # Reuse the handshake's buffered reader: it may already hold
        # read-ahead bytes that a fresh makefile would never see.
        self.rfile = rfile

    def send(self, message: proto.Message) -> None:
        self.sock.sendall(proto.encode_frame(message))

    def close(self) -> None:
        try:
            self.rfile.close()
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


class SessionServer:
    """One session on one TCP port. Construct (binds the port), then run()."""

    def __init__(
        self,
        config: SessionConfig,
        initial_params: ParameterSet,
        schema: ParameterSchema,
        registry=None,
        log_path=None,
        session_id: str = "",
    ):
        self.config = config
        self.schema = schema
        self.registry = registry
        self.log_path = log_path
        self.session_id = session_id or f"{config.model_name}-v{config.model_version}"
        self._global = initial_params
        self._status = STATUS_WAITING
        self._round = 0
        self._lock = threading.Lock()
        self._admission_open = True
        self._clients: dict[str, _ClientConn] = {}
        self._inbox: queue.Queue = queue.Queue()
        self._enough_clients = threading.Event()
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._listener.bind((config.host, config.port))
        except OSError as exc:
            self._listener.close()
            raise PortUnavailable(f"cannot bind {config.host}:{config.port}: {exc}") from exc
        self._listener.listen(32)
        self.port = self._listener.getsockname()[1]
        self.records: list[RoundRecord] = []

    # -- status ------------------------------------------------------------

    def session_status(self) -> str:
        with self._lock:
            return self._status

    @property
    def current_round(self) -> int:
        with self._lock:
            return self._round

    def _set_status(self, status: str, round_index: int | None = None) -> None:
        with self._lock:
            self._status = status
            if round_index is not None:
                self._round = round_index

    # -- admission ----------------------------------------------------------

    def _accept_loop(self) -> None:
        while True:
            try:
                sock, addr = self._listener.accept()
            except OSError:
                return  # listener closed; session over
            threading.Thread(
                target=self._handshake, args=(sock, addr), daemon=True
            ).start()

    def _handshake(self, sock: socket.socket, addr) -> None:
        sock.settimeout(_JOIN_READ_TIMEOUT_S)
        rfile = sock.makefile("rb")
        try:
            message = proto.read_frame(rfile)
        except (ProtocolError, OSError):
            sock.close()
            return
        if not isinstance(message, proto.Join):
            self._reject(sock, "expected Join")
            return
        reason = self._admit(message, sock, rfile)
        if reason is not None:
            logger.info("session %s rejected %s from %s: %s",
                        self.session_id, message.client_id, addr, reason)
            self._reject(sock, reason)

    def _admit(self, join: proto.Join, sock, rfile) -> str | None:
        """Returns a rejection reason, or None when the client is admitted."""
        if join.model_name != self.config.model_name or (
            join.model_version != self.config.model_version
        ):
            return "model mismatch"
        if join.schema_digest != self.config.schema_digest:
            return "schema mismatch"
        with self._lock:
            if not self._admission_open:
                return "session already running"
            if join.client_id in self._clients:
                return "duplicate client id"
            sock.settimeout(None)
            self._clients[join.client_id] = _ClientConn(join.client_id, sock, rfile)
            if len(self._clients) >= self.config.min_clients:
                self._admission_open = False
                self._enough_clients.set()
        threading.Thread(
            target=self._reader_loop, args=(self._clients[join.client_id],), daemon=True
        ).start()
        logger.info("session %s admitted client %s", self.session_id, join.client_id)
        return None

    def _reject(self, sock: socket.socket, reason: str) -> None:
        try:
            sock.sendall(proto.encode_frame(proto.Abort(reason=reason)))
        except OSError:
            pass
        sock.close()

    def _reader_loop(self, conn: _ClientConn) -> None:
        while True:
            try:
                message = proto.read_frame(conn.rfile)
            except Exception:
                message = None
            self._inbox.put((conn.client_id, message))
            if message is None:
                return

    # -- round machinery ------------------------------------------------------

    def _broadcast(self, message: proto.Message) -> None:
        for client_id in sorted(self._clients):
            try:
                self._clients[client_id].send(message)
            except OSError as exc:
                raise SessionFailed(
                    f"send to {client_id} failed: {exc}", self.records
                ) from exc

    def _collect(self, kind, round_index: int) -> dict[str, proto.Message]:
        """One message of the given kind per admitted client, same round."""
        expected = set(self._clients)
        got: dict[str, proto.Message] = {}
        deadline = time.monotonic() + self.config.round_timeout_s
        while expected - set(got):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise RoundTimeout(
                    f"round {round_index}: missing {sorted(expected - set(got))}"
                )
            try:
                client_id, message = self._inbox.get(timeout=remaining)
            except queue.Empty:
                continue
            if message is None:
                raise SessionFailed(
                    f"client {client_id} disconnected in round {round_index}",
                    self.records,
                )
            if not isinstance(message, kind):
                raise SessionFailed(
                    f"client {client_id} sent {type(message).__name__}, "
                    f"expected {kind.__name__}",
                    self.records,
                )
            if message.round != round_index:
                raise SessionFailed(
                    f"client {client_id} answered round {message.round} "
                    f"during round {round_index}",
                    self.records,
                )
            got[client_id] = message
        return got

    def _append_log(self, doc: dict) -> None:
        if self.log_path is None:
            return
        with open(self.log_path, "a", encoding="utf-8") as fp:
            fp.write(json.dumps(doc, sort_keys=True) + "\n")
            fp.flush()

    # -- main ------------------------------------------------------------------

    def run(self) -> tuple[ParameterSet, list[RoundRecord]]:
        accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        accept_thread.start()
        try:
            self._enough_clients.wait()
            cfg = self.config
            self._set_status(STATUS_RUNNING, 0)
            for r in range(1, cfg.rounds + 1):
                self._set_status(STATUS_RUNNING, r)
                self._broadcast(
                    proto.GlobalParams(
                        round=r,
                        epochs=cfg.epochs,
                        batch_size=cfg.batch_size,
                        learning_rate=cfg.learning_rate,
                        body=encode_tensors(self._global),
                    )
                )
                updates = self._collect(proto.LocalUpdate, r)
                weighted = [
                    WeightedUpdate(
                        params=decode_tensors(u.body, self.schema),
                        num_examples=u.num_examples,
                        client_id=client_id,
                    )
                    for client_id, u in updates.items()
                ]
                self._global = aggregate_weighted(weighted)

                self._broadcast(proto.EvalRequest(round=r, body=encode_tensors(self._global)))
                replies = self._collect(proto.EvalReply, r)

                total = sum(u.num_examples for u in updates.values())
                train_loss = (
                    sum(u.num_examples * u.train_loss for u in updates.values()) / total
                )
                eval_total = sum(e.num_examples for e in replies.values())
                record = RoundRecord(
                    round=r,
                    participants=tuple(sorted(self._clients)),
                    train_loss=train_loss,
                    eval_loss=sum(e.num_examples * e.loss for e in replies.values())
                    / eval_total,
                    eval_metric=sum(e.num_examples * e.metric for e in replies.values())
                    / eval_total,
                    wall_times={c: u.wall_time_s for c, u in updates.items()},
                    client_train_loss={c: u.train_loss for c, u in updates.items()},
                )
                self.records.append(record)
                self._append_log({"session_id": self.session_id, **record.to_dict()})
                logger.info(
                    "session %s round %d/%d eval_loss=%.6f metric=%.4f",
                    self.session_id, r, cfg.rounds, record.eval_loss, record.eval_metric,
                )

            # Persist before Finish so anyone reacting to Finish (immediate
            # re-request, download) already sees the new revision.
            if self.registry is not None:
                revision = self.registry.store_revision(
                    cfg.model_name, cfg.model_version, self._global
                )
                logger.info(
                    "session %s stored revision %d (digest %s)",
                    self.session_id, revision, digest_parameters(self._global),
                )
            self._broadcast(proto.Finish())
            self._set_status(STATUS_FINISHED)
            self._append_log({"session_id": self.session_id, "status": STATUS_FINISHED})
            return self._global, self.records
        except (SessionFailed, RoundTimeout) as exc:
            self._set_status(STATUS_FAILED)
            self._append_log(
                {"session_id": self.session_id, "status": STATUS_FAILED, "reason": str(exc)}
            )
            for conn in self._clients.values():
                try:
                    conn.send(proto.Abort(reason=str(exc)))
                except OSError:
                    pass
            if isinstance(exc, RoundTimeout):
                raise SessionFailed(str(exc), self.records) from exc
            raise
        finally:
            self._shutdown()

    def _shutdown(self) -> None:
        try:
            self._listener.close()
        except OSError:
            pass
        for conn in self._clients.values():
            conn.close()


def run_session(
    config: SessionConfig,
    initial_params: ParameterSet,
    schema: ParameterSchema,
    registry=None,
    log_path=None,
    session_id: str = "",
) -> tuple[ParameterSet, list[RoundRecord]]:
    """Convenience wrapper: construct, run to completion, return results."""
    server = SessionServer(
        config, initial_params, schema,
        registry=registry, log_path=log_path, session_id=session_id,
    )
    return server.run()
