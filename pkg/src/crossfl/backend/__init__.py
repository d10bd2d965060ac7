"""Coordinating HTTP service: model registry, session manager, telemetry."""

from .registry import ModelRecord, Registry, TelemetryRecord
from .service import Backend, BackendConfig, SessionRecord
from .http import BackendHTTPServer, start_http_server

__all__ = [
    "Backend",
    "BackendConfig",
    "BackendHTTPServer",
    "ModelRecord",
    "Registry",
    "SessionRecord",
    "TelemetryRecord",
    "start_http_server",
]
