"""Standardized model package format.

A package is a zip archive holding a JSON manifest plus one binary blob per
platform variant. Both blobs carry identical bytes (the canonical tensor
encoding); the platforms differ only in how parameters are *accessed* in
memory, which is param_space's concern. Everything here is bit-exact:
tensors are serialized as little-endian IEEE-754 single precision, and the
manifest records a SHA-256 digest of the initial parameters.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DigestMismatch,
    LengthMismatch,
    MissingVariant,
    NonFiniteValue,
    PackageFormatError,
    SchemaMismatch,
)

ACTIVATIONS = ("relu", "identity", "softmax")
LOSSES = ("mse", "cross_entropy")
PLATFORMS = ("index_map", "layer_tree")

# Zip entries get a fixed timestamp so identical content yields identical bytes.
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)
MANIFEST_ENTRY = "manifest.json"
DELIVERY_ENTRY = "delivery.json"


def canonical_json(obj) -> str:
    """Stable JSON used for digests and persisted documents."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Canonical parameter representation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ParameterSet:
    """Ordered tuple of float32 tensors in canonical schema order.

    Immutable and finite by construction; build instances through
    ``from_arrays`` which casts, freezes, and validates.
    """

    tensors: tuple[np.ndarray, ...]

    @staticmethod
    def from_arrays(arrays) -> "ParameterSet":
        frozen = []
        for i, a in enumerate(arrays):
            t = np.ascontiguousarray(a, dtype="<f4")
            if t.ndim not in (1, 2) or t.size == 0:
                raise SchemaMismatch(
                    f"tensor {i}: expected non-empty 1-D or 2-D array, got shape {t.shape}"
                )
            if not np.isfinite(t).all():
                raise NonFiniteValue(f"tensor {i} contains NaN or Inf")
            t.setflags(write=False)
            frozen.append(t)
        return ParameterSet(tensors=tuple(frozen))

    @property
    def shapes(self) -> tuple[tuple[int, ...], ...]:
        return tuple(t.shape for t in self.tensors)

    @property
    def num_elements(self) -> int:
        return int(sum(t.size for t in self.tensors))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParameterSet):
            return NotImplemented
        return self.shapes == other.shapes and all(
            a.tobytes() == b.tobytes() for a, b in zip(self.tensors, other.tensors)
        )

    def __len__(self) -> int:
        return len(self.tensors)


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TensorSpec:
    """One tensor slot: index-based name plus layer-tree navigation info."""

    name: str
    shape: tuple[int, ...]
    role: str  # "weight" | "bias"
    layer_path: tuple[str, ...]
    updatable: bool

    def element_count(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n


@dataclass(frozen=True)
class ParameterSchema:
    """Ordered tensor specs; canonical order is weight_k, bias_k ascending k."""

    tensors: tuple[TensorSpec, ...]

    @property
    def total_elements(self) -> int:
        return sum(t.element_count() for t in self.tensors)

    def validate(self) -> None:
        paths = set()
        for k, spec in enumerate(self.tensors):
            if spec.name != f"parameter_{k}":
                raise SchemaMismatch(
                    f"tensor {k} named {spec.name!r}, expected 'parameter_{k}'"
                )
            if spec.role not in ("weight", "bias"):
                raise SchemaMismatch(f"{spec.name}: unknown role {spec.role!r}")
            if len(spec.shape) not in (1, 2) or any(d <= 0 for d in spec.shape):
                raise SchemaMismatch(f"{spec.name}: bad shape {spec.shape}")
            if not spec.layer_path:
                raise SchemaMismatch(f"{spec.name}: empty layer_path")
            if spec.layer_path in paths:
                raise SchemaMismatch(
                    f"{spec.name}: duplicate layer_path {list(spec.layer_path)}"
                )
            paths.add(spec.layer_path)

    def to_dict(self) -> dict:
        return {
            "tensors": [
                {
                    "name": t.name,
                    "shape": list(t.shape),
                    "role": t.role,
                    "layer_path": list(t.layer_path),
                    "updatable": t.updatable,
                }
                for t in self.tensors
            ],
            "total_elements": self.total_elements,
        }

    @staticmethod
    def from_dict(d: dict) -> "ParameterSchema":
        try:
            tensors = tuple(
                TensorSpec(
                    name=t["name"],
                    shape=tuple(int(x) for x in t["shape"]),
                    role=t["role"],
                    layer_path=tuple(t["layer_path"]),
                    updatable=bool(t["updatable"]),
                )
                for t in d["tensors"]
            )
        except (KeyError, TypeError) as exc:
            raise PackageFormatError(f"bad schema document: {exc}") from exc
        schema = ParameterSchema(tensors=tensors)
        schema.validate()
        if "total_elements" in d and int(d["total_elements"]) != schema.total_elements:
            raise SchemaMismatch(
                f"total_elements says {d['total_elements']}, "
                f"tensors sum to {schema.total_elements}"
            )
        return schema


def schema_digest(schema: ParameterSchema) -> str:
    """Hex digest identifying a schema; clients and servers compare these."""
    return hashlib.sha256(canonical_json(schema.to_dict()).encode()).hexdigest()


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str


@dataclass(frozen=True)
class ModelManifest:
    name: str
    version: int
    data_type: str
    architecture: tuple[LayerSpec, ...]
    loss: str
    schema: ParameterSchema
    variants: dict[str, str] = field(default_factory=dict)
    params_digest: str = ""
    init_scheme: str = ""
    init_seed: int = 0

    def validate(self) -> None:
        if self.version < 1:
            raise SchemaMismatch(f"version must be >= 1, got {self.version}")
        if self.loss not in LOSSES:
            raise SchemaMismatch(f"unknown loss {self.loss!r}")
        for platform in PLATFORMS:
            if platform not in self.variants:
                raise MissingVariant(f"manifest lacks variant entry {platform!r}")
        self.schema.validate()
        expected = []
        prev_out = None
        for i, layer in enumerate(self.architecture):
            if layer.activation not in ACTIVATIONS:
                raise SchemaMismatch(f"layer {i}: unknown activation {layer.activation!r}")
            if layer.input_dim <= 0 or layer.output_dim <= 0:
                raise SchemaMismatch(f"layer {i}: non-positive dimension")
            if prev_out is not None and layer.input_dim != prev_out:
                raise SchemaMismatch(
                    f"layer {i}: input_dim {layer.input_dim} != previous output_dim {prev_out}"
                )
            prev_out = layer.output_dim
            expected.append(("weight", (layer.input_dim, layer.output_dim)))
            expected.append(("bias", (layer.output_dim,)))
        if len(expected) != len(self.schema.tensors):
            raise SchemaMismatch(
                f"architecture implies {len(expected)} tensors, schema has "
                f"{len(self.schema.tensors)}"
            )
        for spec, (role, shape) in zip(self.schema.tensors, expected):
            if spec.role != role or spec.shape != shape:
                raise SchemaMismatch(
                    f"{spec.name}: schema says {spec.role} {spec.shape}, "
                    f"architecture implies {role} {shape}"
                )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "data_type": self.data_type,
            "architecture": [
                {"input_dim": l.input_dim, "output_dim": l.output_dim, "activation": l.activation}
                for l in self.architecture
            ],
            "loss": self.loss,
            "schema": self.schema.to_dict(),
            "variants": dict(sorted(self.variants.items())),
            "params_digest": self.params_digest,
            "init": {"scheme": self.init_scheme, "seed": self.init_seed},
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelManifest":
        try:
            manifest = ModelManifest(
                name=str(d["name"]),
                version=int(d["version"]),
                data_type=str(d["data_type"]),
                architecture=tuple(
                    LayerSpec(int(l["input_dim"]), int(l["output_dim"]), str(l["activation"]))
                    for l in d["architecture"]
                ),
                loss=str(d["loss"]),
                schema=ParameterSchema.from_dict(d["schema"]),
                variants=dict(d["variants"]),
                params_digest=str(d["params_digest"]),
                init_scheme=str(d.get("init", {}).get("scheme", "")),
                init_seed=int(d.get("init", {}).get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise PackageFormatError(f"bad manifest document: {exc}") from exc
        manifest.validate()
        return manifest


# ---------------------------------------------------------------------------
# Tensor serialization
# ---------------------------------------------------------------------------

def encode_tensors(params: ParameterSet) -> bytes:
    """Concatenate all tensors in schema order as little-endian float32."""
    return b"".join(t.tobytes() for t in params.tensors)


def decode_tensors(data: bytes, schema: ParameterSchema) -> ParameterSet:
    """Inverse of encode_tensors for the given schema."""
    expected = 4 * schema.total_elements
    if len(data) != expected:
        raise LengthMismatch(f"got {len(data)} bytes, schema needs {expected}")
    tensors = []
    offset = 0
    for spec in schema.tensors:
        n = spec.element_count()
        flat = np.frombuffer(data, dtype="<f4", count=n, offset=offset)
        tensors.append(flat.reshape(spec.shape))
        offset += 4 * n
    return ParameterSet.from_arrays(tensors)


def digest_parameters(params: ParameterSet) -> str:
    """SHA-256 of the canonical encoding, lowercase hex."""
    return hashlib.sha256(encode_tensors(params)).hexdigest()


# ---------------------------------------------------------------------------
# Package container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelPackage:
    manifest: ModelManifest
    variants: dict[str, bytes]  # platform -> blob (encode_tensors output)

    @property
    def params(self) -> ParameterSet:
        return decode_tensors(self.variants["index_map"], self.manifest.schema)


def build_package(manifest: ModelManifest, params: ParameterSet) -> ModelPackage:
    """Assemble a package whose variant blobs encode the given parameters."""
    digest = digest_parameters(params)
    if manifest.params_digest != digest:
        raise DigestMismatch(
            f"manifest params_digest {manifest.params_digest} != computed {digest}"
        )
    blob = encode_tensors(params)
    return ModelPackage(manifest=manifest, variants={p: blob for p in PLATFORMS})


def _write_zip(entries: list[tuple[str, bytes]]) -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, data in entries:
            info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
            info.external_attr = 0o644 << 16
            info.create_system = 3
            zf.writestr(info, data)
    return buf.getvalue()


def write_package(pkg: ModelPackage) -> bytes:
    pkg.manifest.validate()
    entries = [(MANIFEST_ENTRY, canonical_json(pkg.manifest.to_dict()).encode())]
    for platform in PLATFORMS:
        entries.append((pkg.manifest.variants[platform], pkg.variants[platform]))
    return _write_zip(entries)


def _open_zip(data: bytes) -> zipfile.ZipFile:
    try:
        return zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile as exc:
        raise PackageFormatError(f"not a zip archive: {exc}") from exc


def _read_manifest(zf: zipfile.ZipFile) -> ModelManifest:
    if MANIFEST_ENTRY not in zf.namelist():
        raise PackageFormatError(f"archive lacks {MANIFEST_ENTRY}")
    try:
        doc = json.loads(zf.read(MANIFEST_ENTRY).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError, zipfile.BadZipFile) as exc:
        raise PackageFormatError(f"unreadable manifest: {exc}") from exc
    return ModelManifest.from_dict(doc)


def read_package(data: bytes) -> ModelPackage:
    """Parse and fully validate a package archive.

    Every variant must decode against the manifest schema and hash to
    params_digest; violations raise the error naming the offending field.
    """
    with _open_zip(data) as zf:
        manifest = _read_manifest(zf)
        names = set(zf.namelist())
        variants: dict[str, bytes] = {}
        for platform, entry in manifest.variants.items():
            if entry not in names:
                raise MissingVariant(f"variant file {entry!r} ({platform}) missing from archive")
            try:
                variants[platform] = zf.read(entry)
            except zipfile.BadZipFile as exc:
                raise PackageFormatError(f"corrupt variant entry {entry!r}: {exc}") from exc
    for platform, blob in variants.items():
        params = decode_tensors(blob, manifest.schema)
        digest = digest_parameters(params)
        if digest != manifest.params_digest:
            raise DigestMismatch(
                f"variant {platform!r} decodes to digest {digest}, "
                f"manifest says {manifest.params_digest}"
            )
    return ModelPackage(manifest=manifest, variants=variants)


# ---------------------------------------------------------------------------
# Delivery bundle: one platform's blob + manifest, as served to clients
# ---------------------------------------------------------------------------

def write_variant_bundle(
    manifest: ModelManifest, platform: str, params: ParameterSet, revision: int
) -> bytes:
    """Zip a single platform variant at some parameter revision for download.

    delivery.json carries the revision and the digest of the *delivered*
    parameters, which differs from manifest.params_digest once training
    has produced revisions.
    """
    if platform not in manifest.variants:
        raise MissingVariant(f"manifest has no variant for platform {platform!r}")
    delivery = {
        "platform": platform,
        "revision": revision,
        "params_digest": digest_parameters(params),
    }
    entries = [
        (MANIFEST_ENTRY, canonical_json(manifest.to_dict()).encode()),
        (DELIVERY_ENTRY, canonical_json(delivery).encode()),
        (manifest.variants[platform], encode_tensors(params)),
    ]
    return _write_zip(entries)


def read_variant_bundle(data: bytes) -> tuple[ModelManifest, str, int, ParameterSet]:
    """Parse a delivery bundle; returns (manifest, platform, revision, params)."""
    with _open_zip(data) as zf:
        manifest = _read_manifest(zf)
        if DELIVERY_ENTRY not in zf.namelist():
            raise PackageFormatError(f"bundle lacks {DELIVERY_ENTRY}")
        try:
            delivery = json.loads(zf.read(DELIVERY_ENTRY).decode("utf-8"))
            platform = delivery["platform"]
            entry = manifest.variants.get(platform)
            if entry is None or entry not in zf.namelist():
                raise MissingVariant(f"bundle lacks variant file for {platform!r}")
            blob = zf.read(entry)
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError,
                zipfile.BadZipFile) as exc:
            raise PackageFormatError(f"unreadable bundle: {exc}") from exc
    params = decode_tensors(blob, manifest.schema)
    digest = digest_parameters(params)
    if digest != delivery["params_digest"]:
        raise DigestMismatch(
            f"delivered params digest {digest} != advertised {delivery['params_digest']}"
        )
    return manifest, platform, int(delivery["revision"]), params
