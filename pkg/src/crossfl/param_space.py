"""Uniform parameter representation and the two emulated platform layouts.

Both layouts canonicalize to ParameterSet (ordered float32 tensors), which
is what aggregation operates on. The index-map layout is a flat name->tensor
map keyed by generated index-based names. The layer-tree layout nests
weights inside an immutable node tree; reads and writes go through path
navigation only, mirroring a runtime that forbids assigning parameters on
(non-updatable) layers directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyUpdateList,
    MissingName,
    NonFiniteValue,
    PathNotFound,
    SchemaMismatch,
    ShapeMismatch,
    UnknownName,
)
from .model_package import ParameterSchema, ParameterSet, TensorSpec

__all__ = [
    "ParameterSet",
    "IndexMapLayout",
    "LayerNode",
    "LayerTreeLayout",
    "WeightedUpdate",
    "from_index_map",
    "to_index_map",
    "layer_tree_from_schema",
    "from_layer_tree",
    "set_in_layer_tree",
    "aggregate_weighted",
]


# ---------------------------------------------------------------------------
# Index-map layout (flat name -> tensor)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndexMapLayout:
    entries: dict[str, np.ndarray]


def to_index_map(params: ParameterSet, schema: ParameterSchema) -> IndexMapLayout:
    """Spread a canonical set into the generated index-based names."""
    _check_shapes(params, schema)
    return IndexMapLayout(
        entries={spec.name: t for spec, t in zip(schema.tensors, params.tensors)}
    )


def from_index_map(layout: IndexMapLayout, schema: ParameterSchema) -> ParameterSet:
    """Gather named tensors back into canonical order."""
    known = {spec.name for spec in schema.tensors}
    for key in layout.entries:
        if key not in known:
            raise UnknownName(f"layout key {key!r} is not in the schema")
    tensors = []
    for spec in schema.tensors:
        if spec.name not in layout.entries:
            raise MissingName(f"layout lacks entry {spec.name!r}")
        t = layout.entries[spec.name]
        if tuple(t.shape) != spec.shape:
            raise ShapeMismatch(f"{spec.name}: got {tuple(t.shape)}, schema says {spec.shape}")
        tensors.append(t)
    return ParameterSet.from_arrays(tensors)


# ---------------------------------------------------------------------------
# Layer-tree layout (nested, navigation-only access)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerNode:
    """One tree node. Frozen: weights can only change via set_in_layer_tree,
    which rebuilds the affected spine of the tree."""

    name: str
    updatable: bool
    weights: tuple[np.ndarray, ...]
    children: tuple["LayerNode", ...] = ()


@dataclass(frozen=True)
class LayerTreeLayout:
    root: LayerNode


def _resolve(root: LayerNode, path: tuple[str, ...]) -> tuple[LayerNode, int]:
    """Walk child names; the final path element is the weight-slot index."""
    if len(path) < 2:
        raise PathNotFound(f"path {list(path)} too short to name a node and slot")
    node = root
    for part in path[:-1]:
        for child in node.children:
            if child.name == part:
                node = child
                break
        else:
            raise PathNotFound(f"no node {part!r} under {node.name!r} (path {list(path)})")
    try:
        slot = int(path[-1])
    except ValueError:
        raise PathNotFound(f"slot element {path[-1]!r} is not an index (path {list(path)})")
    if not 0 <= slot < len(node.weights):
        raise PathNotFound(f"node {node.name!r} has no weight slot {slot}")
    return node, slot


def layer_tree_from_schema(schema: ParameterSchema, params: ParameterSet) -> LayerTreeLayout:
    """Materialize the tree a given schema describes, filled with params.

    Node structure comes from the layer_path entries; nodes sharing a path
    prefix share a node, and a node is updatable when any of its slots is.
    """
    _check_shapes(params, schema)

    # name -> (updatable slots seen, slot -> tensor, child order)
    class _Draft:
        __slots__ = ("name", "updatable", "slots", "children")

        def __init__(self, name):
            self.name = name
            self.updatable = False
            self.slots: dict[int, np.ndarray] = {}
            self.children: dict[str, _Draft] = {}

    root = _Draft("model")
    for spec, tensor in zip(schema.tensors, params.tensors):
        node = root
        for part in spec.layer_path[:-1]:
            node = node.children.setdefault(part, _Draft(part))
        slot = int(spec.layer_path[-1])
        node.slots[slot] = tensor
        node.updatable = node.updatable or spec.updatable

    def _freeze(draft: _Draft) -> LayerNode:
        weights = tuple(draft.slots[i] for i in range(len(draft.slots)))
        if len(weights) != len(draft.slots):
            raise SchemaMismatch(f"node {draft.name!r} has gaps in its weight slots")
        return LayerNode(
            name=draft.name,
            updatable=draft.updatable,
            weights=weights,
            children=tuple(_freeze(c) for c in draft.children.values()),
        )

    return LayerTreeLayout(root=_freeze(root))


def from_layer_tree(layout: LayerTreeLayout, schema: ParameterSchema) -> ParameterSet:
    """Gather weights by navigating each schema path, canonical order.

    Non-updatable nodes are read the same way; retrieving their parameters
    is exactly what the navigation machinery exists for.
    """
    tensors = []
    for spec in schema.tensors:
        node, slot = _resolve(layout.root, spec.layer_path)
        t = node.weights[slot]
        if tuple(t.shape) != spec.shape:
            raise ShapeMismatch(
                f"{spec.name} at {list(spec.layer_path)}: got {tuple(t.shape)}, "
                f"schema says {spec.shape}"
            )
        tensors.append(t)
    return ParameterSet.from_arrays(tensors)


def set_in_layer_tree(
    layout: LayerTreeLayout, params: ParameterSet, schema: ParameterSchema
) -> LayerTreeLayout:
    """Structural rewrite: a new tree with params written at the schema paths.

    This is the only write path, for updatable and frozen nodes alike; node
    names, flags, and topology are preserved.
    """
    _check_shapes(params, schema)
    # Validate all paths against the existing tree before rewriting.
    for spec in schema.tensors:
        node, slot = _resolve(layout.root, spec.layer_path)
        if tuple(node.weights[slot].shape) != spec.shape:
            raise ShapeMismatch(
                f"{spec.name} at {list(spec.layer_path)}: tree holds "
                f"{tuple(node.weights[slot].shape)}, schema says {spec.shape}"
            )

    by_node_path: dict[tuple[str, ...], dict[int, np.ndarray]] = {}
    for spec, tensor in zip(schema.tensors, params.tensors):
        by_node_path.setdefault(spec.layer_path[:-1], {})[int(spec.layer_path[-1])] = tensor

    def _rewrite(node: LayerNode, prefix: tuple[str, ...]) -> LayerNode:
        writes = by_node_path.get(prefix, {})
        weights = tuple(
            writes.get(i, w) for i, w in enumerate(node.weights)
        )
        children = tuple(_rewrite(c, prefix + (c.name,)) for c in node.children)
        return LayerNode(
            name=node.name, updatable=node.updatable, weights=weights, children=children
        )

    return LayerTreeLayout(root=_rewrite(layout.root, ()))


# ---------------------------------------------------------------------------
# Cross-platform aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightedUpdate:
    """One client's local result plus its example count (and a sort id)."""

    params: ParameterSet
    num_examples: int
    client_id: str = ""

    def __post_init__(self):
        if self.num_examples < 1:
            raise SchemaMismatch(f"num_examples must be >= 1, got {self.num_examples}")


def aggregate_weighted_double(updates: list[WeightedUpdate]) -> list[np.ndarray]:
    """The float64 weighted mean sum(n_k * p_k) / sum(n_k), before any cast.

    Updates are accumulated in client_id order so the result is invariant
    to arrival order. Exposed separately so the accumulation can be checked
    against an independent oracle at full double precision.
    """
    if not updates:
        raise EmptyUpdateList("no updates to aggregate")
    ordered = sorted(enumerate(updates), key=lambda p: (p[1].client_id, p[0]))
    shapes = ordered[0][1].params.shapes
    for _, u in ordered:
        if u.params.shapes != shapes:
            raise SchemaMismatch(
                f"update {u.client_id!r} has shapes {u.params.shapes}, expected {shapes}"
            )
        for t in u.params.tensors:
            if not np.isfinite(t).all():
                raise NonFiniteValue(f"update {u.client_id!r} contains NaN or Inf")

    total = float(sum(u.num_examples for _, u in ordered))
    acc = [np.zeros(s, dtype=np.float64) for s in shapes]
    for _, u in ordered:
        n = float(u.num_examples)
        for a, t in zip(acc, u.params.tensors):
            a += n * t.astype(np.float64)
    return [a / total for a in acc]


def aggregate_weighted(updates: list[WeightedUpdate]) -> ParameterSet:
    """Example-count-weighted mean over updates, cast once to float32.

    The float64 accumulation keeps all-equal inputs exact: averaging k
    copies of p returns p bit-for-bit.
    """
    return ParameterSet.from_arrays(aggregate_weighted_double(updates))


def _check_shapes(params: ParameterSet, schema: ParameterSchema) -> None:
    if len(params.tensors) != len(schema.tensors):
        raise SchemaMismatch(
            f"parameter set has {len(params.tensors)} tensors, "
            f"schema has {len(schema.tensors)}"
        )
    for spec, t in zip(schema.tensors, params.tensors):
        if tuple(t.shape) != spec.shape:
            raise ShapeMismatch(f"{spec.name}: got {tuple(t.shape)}, schema says {spec.shape}")
