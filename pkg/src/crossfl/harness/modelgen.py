"""Deterministic model package construction for demos and tests.

Builds manifests and initial weights from a small JSON-able spec dict (the
same shape the standalone authoring tool consumes):

    {
      "name": "demo-blobs", "version": 1, "data_type": "blobs",
      "layers": [{"input_dim": 4, "output_dim": 16, "activation": "relu"},
                 {"input_dim": 16, "output_dim": 2, "activation": "softmax"}],
      "loss": "cross_entropy",
      "init": {"scheme": "xavier_uniform", "seed": 7}
    }

Initialization is pinned so any compliant tool reproduces it bit-for-bit:
one SplitMix64 stream seeded with init.seed; weight tensors draw
input_dim*output_dim uniforms in row-major schema order, each value
(2u-1)*sqrt(6/(fan_in+fan_out)) computed in float64 then cast to float32;
biases are zero and draw nothing.
"""

from __future__ import annotations

import math

import numpy as np

from ..model_package import (
    LayerSpec,
    ModelManifest,
    ModelPackage,
    ParameterSchema,
    ParameterSet,
    TensorSpec,
    build_package,
    digest_parameters,
    write_package,
)
from ..seeding import SplitMix64

INIT_SCHEME = "xavier_uniform"


def schema_for_layers(layers: tuple[LayerSpec, ...]) -> ParameterSchema:
    """Canonical schema: weight_k then bias_k, paths under dense_<k> nodes.

    Only the final layer is marked updatable, which forces every client on
    the tree layout to use the navigation write path for the rest.
    """
    tensors = []
    last = len(layers) - 1
    for k, layer in enumerate(layers):
        updatable = k == last
        tensors.append(TensorSpec(
            name=f"parameter_{2 * k}",
            shape=(layer.input_dim, layer.output_dim),
            role="weight",
            layer_path=(f"dense_{k}", "0"),
            updatable=updatable,
        ))
        tensors.append(TensorSpec(
            name=f"parameter_{2 * k + 1}",
            shape=(layer.output_dim,),
            role="bias",
            layer_path=(f"dense_{k}", "1"),
            updatable=updatable,
        ))
    schema = ParameterSchema(tensors=tuple(tensors))
    schema.validate()
    return schema


def initial_parameters(layers: tuple[LayerSpec, ...], seed: int) -> ParameterSet:
    """Xavier-uniform weights, zero biases, from the documented stream."""
    stream = SplitMix64(seed)
    tensors = []
    for layer in layers:
        fan_in, fan_out = layer.input_dim, layer.output_dim
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        values = [
            np.float32((2.0 * stream.next_unit() - 1.0) * bound)
            for _ in range(fan_in * fan_out)
        ]
        tensors.append(np.array(values, dtype=np.float32).reshape(fan_in, fan_out))
        tensors.append(np.zeros(fan_out, dtype=np.float32))
    return ParameterSet.from_arrays(tensors)


def _layers_of(spec: dict) -> tuple[LayerSpec, ...]:
    return tuple(
        LayerSpec(int(l["input_dim"]), int(l["output_dim"]), str(l["activation"]))
        for l in spec["layers"]
    )


def package_from_spec(spec: dict) -> ModelPackage:
    layers = _layers_of(spec)
    seed = int(spec["init"]["seed"])
    params = initial_parameters(layers, seed)
    manifest = ModelManifest(
        name=spec["name"],
        version=int(spec["version"]),
        data_type=spec["data_type"],
        architecture=layers,
        loss=spec["loss"],
        schema=schema_for_layers(layers),
        variants={"index_map": "index_map.bin", "layer_tree": "layer_tree.bin"},
        params_digest=digest_parameters(params),
        init_scheme=spec["init"].get("scheme", INIT_SCHEME),
        init_seed=seed,
    )
    manifest.validate()
    return build_package(manifest, params)


def package_bytes_from_spec(spec: dict) -> bytes:
    return write_package(package_from_spec(spec))


def widen_spec(spec: dict, hidden: int) -> dict:
    """Next version of a spec with a different first hidden width."""
    layers = [dict(l) for l in spec["layers"]]
    if len(layers) < 2:
        raise ValueError("widen needs at least two layers")
    layers[0]["output_dim"] = hidden
    layers[1]["input_dim"] = hidden
    return {**spec, "version": int(spec["version"]) + 1, "layers": layers}


def blobs_spec(features: int = 4, hidden: int = 16, seed: int = 11) -> dict:
    return {
        "name": "demo-blobs",
        "version": 1,
        "data_type": "blobs",
        "layers": [
            {"input_dim": features, "output_dim": hidden, "activation": "relu"},
            {"input_dim": hidden, "output_dim": 2, "activation": "softmax"},
        ],
        "loss": "cross_entropy",
        "init": {"scheme": INIT_SCHEME, "seed": seed},
    }


def sleep_spec(hidden: int = 8, seed: int = 12) -> dict:
    return {
        "name": "demo-sleep",
        "version": 1,
        "data_type": "sleep",
        "layers": [
            {"input_dim": 3, "output_dim": hidden, "activation": "relu"},
            {"input_dim": hidden, "output_dim": 1, "activation": "identity"},
        ],
        "loss": "mse",
        "init": {"scheme": INIT_SCHEME, "seed": seed},
    }
