"""HTTP surface of the backend, on the stdlib threading server.

Endpoints (bodies are JSON unless noted):

    POST /api/models                          binary package -> 201 record summary
    GET  /api/models?data_type=&platform=     -> advertisement
    GET  /api/models/{name}/{version}/{platform}  -> zip variant bundle
    POST /api/train {"name","version"}        -> {"session_id","port"}
    GET  /api/sessions                        -> session list
    POST /api/telemetry                       -> {"ok": true}
    GET  /api/telemetry?platform=&client_id=&session_id=  -> records
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from ..errors import (
    CrossFLError,
    DuplicateVersion,
    MalformedRecord,
    NoModelForDataType,
    NotFound,
    PortRangeExhausted,
    ValidationFailed,
)
from .service import Backend, BackendConfig

logger = logging.getLogger(__name__)

_STATUS_OF = {
    NotFound: 404,
    NoModelForDataType: 404,
    DuplicateVersion: 409,
    ValidationFailed: 400,
    MalformedRecord: 400,
    PortRangeExhausted: 503,
}


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def backend(self) -> Backend:
        return self.server.backend

    def log_message(self, fmt, *args):
        logger.debug("%s - %s", self.address_string(), fmt % args)

    # -- helpers -------------------------------------------------------------

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", 0))
        return self.rfile.read(length) if length else b""

    def _send_json(self, obj, status: int = 200) -> None:
        data = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _send_bytes(self, data: bytes, content_type: str) -> None:
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _send_error_json(self, exc: Exception) -> None:
        status = 500
        for kind, code in _STATUS_OF.items():
            if isinstance(exc, kind):
                status = code
                break
        self._send_json({"error": type(exc).__name__, "detail": str(exc)}, status)

    # -- dispatch ------------------------------------------------------------

    def do_GET(self):
        url = urlparse(self.path)
        query = {k: v[0] for k, v in parse_qs(url.query).items()}
        parts = [p for p in url.path.split("/") if p]
        try:
            if parts == ["api", "models"]:
                ad = self.backend.advertise_model(
                    query.get("data_type", ""), query.get("platform", "")
                )
                self._send_json(ad)
            elif len(parts) == 5 and parts[:2] == ["api", "models"]:
                name, version, platform = parts[2], int(parts[3]), parts[4]
                bundle = self.backend.download_model(name, version, platform)
                self._send_bytes(bundle, "application/zip")
            elif parts == ["api", "sessions"]:
                self._send_json(self.backend.sessions())
            elif parts == ["api", "telemetry"]:
                records = self.backend.list_telemetry(
                    platform=query.get("platform"),
                    client_id=query.get("client_id"),
                    session_id=query.get("session_id"),
                )
                self._send_json(records)
            else:
                self._send_json({"error": "NotFound", "detail": self.path}, 404)
        except (CrossFLError, ValueError) as exc:
            self._send_error_json(exc)

    def do_POST(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        body = self._read_body()
        try:
            if parts == ["api", "models"]:
                record = self.backend.upload_model(body)
                self._send_json(record, 201)
            elif parts == ["api", "train"]:
                doc = json.loads(body.decode("utf-8"))
                result = self.backend.request_training(doc["name"], int(doc["version"]))
                self._send_json(result)
            elif parts == ["api", "telemetry"]:
                self.backend.ingest_telemetry(json.loads(body.decode("utf-8")))
                self._send_json({"ok": True})
            else:
                self._send_json({"error": "NotFound", "detail": self.path}, 404)
        except (CrossFLError, ValueError, KeyError, json.JSONDecodeError) as exc:
            self._send_error_json(exc)


class BackendHTTPServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, backend: Backend, host: str, port: int):
        super().__init__((host, port), _Handler)
        self.backend = backend

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


def start_http_server(config: BackendConfig) -> tuple[BackendHTTPServer, Backend, threading.Thread]:
    """Build backend + HTTP server and serve on a background thread."""
    backend = Backend(config)
    server = BackendHTTPServer(backend, config.host, config.http_port)
    thread = threading.Thread(target=server.serve_forever, daemon=True, name="backend-http")
    thread.start()
    return server, backend, thread
