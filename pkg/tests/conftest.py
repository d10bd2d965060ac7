"""Shared fixtures: tiny schemas, parameter sets, and port bookkeeping."""

from __future__ import annotations

import contextlib
import itertools
import logging

import numpy as np
import pytest

from crossfl.backend import BackendConfig, start_http_server
from crossfl.model_package import (
    LayerSpec,
    ModelManifest,
    ParameterSchema,
    ParameterSet,
    TensorSpec,
    digest_parameters,
)

logging.getLogger("crossfl").setLevel(logging.WARNING)

# Disjoint session port ranges so tests never trip over one another's
# leftover listeners.
_PORT_COUNTER = itertools.count(21000, 40)


@pytest.fixture
def port_range():
    lo = next(_PORT_COUNTER)
    return (lo, lo + 39)


def make_schema(dims=((2, 3), (3,)), updatable_last_only=True) -> ParameterSchema:
    """Schema from a flat list of shapes; weights are 2-D, biases 1-D.

    Alternating (weight, bias) pairs share a dense_<k> node; anything else
    gets its own node so layer paths stay unique.
    """
    tensors = []
    layer = -1
    prev_was_weight = False
    for k, shape in enumerate(dims):
        role = "weight" if len(shape) == 2 else "bias"
        if role == "weight":
            layer += 1
            path = (f"dense_{layer}", "0")
            prev_was_weight = True
        elif prev_was_weight:
            path = (f"dense_{layer}", "1")
            prev_was_weight = False
        else:
            path = (f"vec_{k}", "0")
        tensors.append(TensorSpec(
            name=f"parameter_{k}",
            shape=tuple(shape),
            role=role,
            layer_path=path,
            updatable=not updatable_last_only or k >= len(dims) - 2,
        ))
    schema = ParameterSchema(tensors=tuple(tensors))
    schema.validate()
    return schema


def make_params(schema: ParameterSchema, seed: int = 0) -> ParameterSet:
    rng = np.random.Generator(np.random.PCG64(seed))
    return ParameterSet.from_arrays(
        [rng.standard_normal(spec.shape).astype(np.float32) for spec in schema.tensors]
    )


@contextlib.contextmanager
def launch_test_backend(data_dir, port_range, **overrides):
    """Backend + HTTP server on an ephemeral port, torn down afterwards."""
    config = BackendConfig(**{
        "data_dir": str(data_dir),
        "http_port": 0,
        "port_range": port_range,
        "rounds": 1,
        "min_clients": 1,
        "epochs": 1,
        "batch_size": 8,
        "learning_rate": 0.05,
        "round_timeout_s": 20.0,
        **overrides,
    })
    server, backend, _ = start_http_server(config)
    try:
        yield server, backend, server.url
    finally:
        server.shutdown()
        server.server_close()


def two_layer_manifest(name="tiny", version=1, data_type="demo") -> tuple[ModelManifest, ParameterSet]:
    """2-layer MLP (2 -> 3 relu -> 1 identity, mse) with seeded params."""
    schema = make_schema(dims=((2, 3), (3,), (3, 1), (1,)))
    params = make_params(schema, seed=42)
    manifest = ModelManifest(
        name=name,
        version=version,
        data_type=data_type,
        architecture=(LayerSpec(2, 3, "relu"), LayerSpec(3, 1, "identity")),
        loss="mse",
        schema=schema,
        variants={"index_map": "index_map.bin", "layer_tree": "layer_tree.bin"},
        params_digest=digest_parameters(params),
    )
    manifest.validate()
    return manifest, params
