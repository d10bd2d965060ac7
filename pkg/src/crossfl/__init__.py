"""crossfl: desk-scale cross-platform federated learning.

A backend delivers versioned model packages to heterogeneous clients,
spawns one FL server per training session, and aggregates parameters
across two emulated device parameter layouts; clients really train by
gradient descent.
"""

__version__ = "0.1.0"

from . import errors
from .model_package import (
    ModelManifest,
    ModelPackage,
    ParameterSchema,
    ParameterSet,
    TensorSpec,
    decode_tensors,
    digest_parameters,
    encode_tensors,
    read_package,
    write_package,
)
from .param_space import (
    IndexMapLayout,
    LayerTreeLayout,
    WeightedUpdate,
    aggregate_weighted,
    from_index_map,
    from_layer_tree,
    set_in_layer_tree,
    to_index_map,
)
from .trainer import DataShard, MlpModel, TrainConfig, TrainStats

__all__ = [
    "DataShard",
    "IndexMapLayout",
    "LayerTreeLayout",
    "MlpModel",
    "ModelManifest",
    "ModelPackage",
    "ParameterSchema",
    "ParameterSet",
    "TensorSpec",
    "TrainConfig",
    "TrainStats",
    "WeightedUpdate",
    "aggregate_weighted",
    "decode_tensors",
    "digest_parameters",
    "encode_tensors",
    "errors",
    "from_index_map",
    "from_layer_tree",
    "read_package",
    "set_in_layer_tree",
    "to_index_map",
    "write_package",
]
