"""Durable model registry and telemetry store.

State is a directory: uploaded package files, per-revision parameter blobs,
a single JSON metadata index rewritten atomically (write-temp-then-rename),
and an append-only telemetry log of JSON lines. No database; everything is
inspectable with a text editor and survives process restarts.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from ..errors import (
    CrossFLError,
    DuplicateVersion,
    MalformedRecord,
    NotFound,
    ValidationFailed,
)
from ..model_package import (
    ModelManifest,
    ModelPackage,
    ParameterSet,
    decode_tensors,
    encode_tensors,
    read_package,
)

_NAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


@dataclass
class ModelRecord:
    name: str
    version: int
    data_type: str
    package_file: str
    revision: int = 0  # 0 = as-authored initial parameters
    uploaded_at: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "data_type": self.data_type,
            "package_file": self.package_file,
            "revision": self.revision,
            "uploaded_at": self.uploaded_at,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelRecord":
        return ModelRecord(
            name=d["name"],
            version=int(d["version"]),
            data_type=d["data_type"],
            package_file=d["package_file"],
            revision=int(d["revision"]),
            uploaded_at=d.get("uploaded_at", ""),
        )


@dataclass(frozen=True)
class TelemetryRecord:
    client_id: str
    platform: str
    device: str
    round: int
    wall_time_s: float
    ram: str = ""
    session_id: str = ""

    def validate(self) -> None:
        if not self.client_id:
            raise MalformedRecord("client_id is empty")
        if not self.platform:
            raise MalformedRecord("platform is empty")
        if self.round < 1:
            raise MalformedRecord(f"round must be >= 1, got {self.round}")
        if not self.wall_time_s > 0:
            raise MalformedRecord(f"wall_time_s must be > 0, got {self.wall_time_s}")

    def to_dict(self) -> dict:
        return {
            "client_id": self.client_id,
            "platform": self.platform,
            "device": self.device,
            "round": self.round,
            "wall_time_s": self.wall_time_s,
            "ram": self.ram,
            "session_id": self.session_id,
        }

    @staticmethod
    def from_dict(d: dict) -> "TelemetryRecord":
        try:
            record = TelemetryRecord(
                client_id=str(d["client_id"]),
                platform=str(d["platform"]),
                device=str(d.get("device", "")),
                round=int(d["round"]),
                wall_time_s=float(d["wall_time_s"]),
                ram=str(d.get("ram", "")),
                session_id=str(d.get("session_id", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(f"bad telemetry document: {exc}") from exc
        record.validate()
        return record


class Registry:
    """Thread-safe directory-backed store of packages, revisions, telemetry."""

    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        self.packages_dir = self.data_dir / "packages"
        self.revisions_dir = self.data_dir / "revisions"
        self.sessions_dir = self.data_dir / "sessions"
        for d in (self.data_dir, self.packages_dir, self.revisions_dir, self.sessions_dir):
            d.mkdir(parents=True, exist_ok=True)
        self.index_path = self.data_dir / "index.json"
        self.telemetry_path = self.data_dir / "telemetry.log"
        self._lock = threading.RLock()
        self._records: dict[tuple[str, int], ModelRecord] = {}
        self._manifests: dict[tuple[str, int], ModelManifest] = {}
        self._load()

    # -- persistence ----------------------------------------------------------

    def _load(self) -> None:
        if not self.index_path.exists():
            return
        doc = json.loads(self.index_path.read_text(encoding="utf-8"))
        for entry in doc.get("records", []):
            record = ModelRecord.from_dict(entry)
            self._records[(record.name, record.version)] = record

    def _save(self) -> None:
        doc = {
            "records": [
                r.to_dict()
                for r in sorted(self._records.values(), key=lambda r: (r.name, r.version))
            ]
        }
        tmp = self.index_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
        os.replace(tmp, self.index_path)

    # -- models -----------------------------------------------------------------

    def add_package(self, data: bytes) -> ModelRecord:
        """Validate and store an uploaded package archive."""
        try:
            pkg = read_package(data)
        except CrossFLError as exc:
            raise ValidationFailed(f"{type(exc).__name__}: {exc}") from exc
        manifest = pkg.manifest
        if not _NAME_RE.match(manifest.name):
            raise ValidationFailed(f"model name {manifest.name!r} is not filesystem-safe")
        key = (manifest.name, manifest.version)
        with self._lock:
            if key in self._records:
                raise DuplicateVersion(
                    f"{manifest.name} v{manifest.version} is already registered"
                )
            filename = f"{manifest.name}-v{manifest.version}.pkg"
            (self.packages_dir / filename).write_bytes(data)
            record = ModelRecord(
                name=manifest.name,
                version=manifest.version,
                data_type=manifest.data_type,
                package_file=filename,
                revision=0,
                uploaded_at=datetime.now(timezone.utc).isoformat(),
            )
            self._records[key] = record
            self._manifests[key] = manifest
            self._save()
            return record

    def get(self, name: str, version: int) -> ModelRecord:
        with self._lock:
            record = self._records.get((name, version))
        if record is None:
            raise NotFound(f"no model {name} v{version}")
        return record

    def records(self) -> list[ModelRecord]:
        with self._lock:
            return sorted(self._records.values(), key=lambda r: (r.name, r.version))

    def latest_for(self, data_type: str, platform: str) -> ModelRecord | None:
        """Highest-version record matching data type with the platform variant."""
        with self._lock:
            candidates = [r for r in self._records.values() if r.data_type == data_type]
        best = None
        for record in sorted(candidates, key=lambda r: r.version):
            if platform in self.manifest(record).variants:
                best = record
        return best

    def manifest(self, record: ModelRecord) -> ModelManifest:
        key = (record.name, record.version)
        with self._lock:
            cached = self._manifests.get(key)
        if cached is not None:
            return cached
        pkg = self.package(record)
        with self._lock:
            self._manifests[key] = pkg.manifest
        return pkg.manifest

    def package(self, record: ModelRecord) -> ModelPackage:
        data = (self.packages_dir / record.package_file).read_bytes()
        return read_package(data)

    def _revision_path(self, name: str, version: int, revision: int) -> Path:
        return self.revisions_dir / f"{name}-v{version}-r{revision}.bin"

    def current_params(self, record: ModelRecord) -> ParameterSet:
        """Parameters at the record's current revision (0 = as uploaded)."""
        manifest = self.manifest(record)
        if record.revision == 0:
            return self.package(record).params
        blob = self._revision_path(record.name, record.version, record.revision).read_bytes()
        return decode_tensors(blob, manifest.schema)

    def store_revision(self, name: str, version: int, params: ParameterSet) -> int:
        """Persist trained parameters as the next revision; returns its number."""
        with self._lock:
            record = self._records.get((name, version))
            if record is None:
                raise NotFound(f"no model {name} v{version}")
            revision = record.revision + 1
            self._revision_path(name, version, revision).write_bytes(encode_tensors(params))
            record.revision = revision
            self._save()
            return revision

    # -- telemetry ------------------------------------------------------------

    def append_telemetry(self, record: TelemetryRecord) -> None:
        record.validate()
        line = json.dumps(record.to_dict(), sort_keys=True)
        with self._lock:
            with open(self.telemetry_path, "a", encoding="utf-8") as fp:
                fp.write(line + "\n")
                fp.flush()
                os.fsync(fp.fileno())

    def list_telemetry(
        self,
        platform: str | None = None,
        client_id: str | None = None,
        session_id: str | None = None,
    ) -> list[dict]:
        if not self.telemetry_path.exists():
            return []
        out = []
        with self._lock:
            lines = self.telemetry_path.read_text(encoding="utf-8").splitlines()
        for line in lines:
            if not line.strip():
                continue
            doc = json.loads(line)
            if platform is not None and doc.get("platform") != platform:
                continue
            if client_id is not None and doc.get("client_id") != client_id:
                continue
            if session_id is not None and doc.get("session_id") != session_id:
                continue
            out.append(doc)
        return out
