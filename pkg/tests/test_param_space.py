"""Layout conversions and cross-platform weighted aggregation."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossfl.errors import (
    EmptyUpdateList,
    MissingName,
    NonFiniteValue,
    PathNotFound,
    SchemaMismatch,
    ShapeMismatch,
    UnknownName,
)
from crossfl.model_package import ParameterSet
from crossfl.param_space import (
    IndexMapLayout,
    WeightedUpdate,
    aggregate_weighted,
    aggregate_weighted_double,
    from_index_map,
    from_layer_tree,
    layer_tree_from_schema,
    set_in_layer_tree,
    to_index_map,
)

from conftest import make_params, make_schema


# ---------------------------------------------------------------------------
# index-map layout
# ---------------------------------------------------------------------------

def test_from_index_map_orders_by_generated_names():
    schema = make_schema(dims=((2,), (1,)))
    layout = IndexMapLayout(entries={
        "parameter_1": np.array([3.0], dtype=np.float32),
        "parameter_0": np.array([1.0, 2.0], dtype=np.float32),
    })
    params = from_index_map(layout, schema)
    assert params.tensors[0].tolist() == [1.0, 2.0]
    assert params.tensors[1].tolist() == [3.0]


def test_from_index_map_missing_name():
    schema = make_schema(dims=((2,), (1,)))
    layout = IndexMapLayout(entries={"parameter_0": np.zeros(2, dtype=np.float32)})
    with pytest.raises(MissingName):
        from_index_map(layout, schema)


def test_from_index_map_unknown_name():
    schema = make_schema(dims=((2,), (1,)))
    layout = IndexMapLayout(entries={
        "parameter_0": np.zeros(2, dtype=np.float32),
        "parameter_1": np.zeros(1, dtype=np.float32),
        "weights": np.zeros(1, dtype=np.float32),
    })
    with pytest.raises(UnknownName):
        from_index_map(layout, schema)


def test_to_index_map_names_for_two_layer_mlp():
    schema = make_schema(dims=((2, 3), (3,), (3, 1), (1,)))
    layout = to_index_map(make_params(schema), schema)
    assert set(layout.entries) == {f"parameter_{k}" for k in range(4)}


def test_index_map_round_trip_empty_schema():
    schema = make_schema(dims=())
    empty = ParameterSet(tensors=())
    assert to_index_map(empty, schema).entries == {}
    assert from_index_map(IndexMapLayout(entries={}), schema) == empty


@given(st.integers(0, 2**32))
@settings(max_examples=25, deadline=None)
def test_index_map_round_trip_identity(seed):
    schema = make_schema(dims=((3, 2), (2,), (2, 4), (4,)))
    params = make_params(schema, seed=seed)
    assert from_index_map(to_index_map(params, schema), schema) == params


# ---------------------------------------------------------------------------
# layer-tree layout
# ---------------------------------------------------------------------------

def test_tree_gathers_frozen_and_updatable_layers():
    schema = make_schema(dims=((2, 3), (3,), (3, 1), (1,)), updatable_last_only=True)
    updatable_flags = [spec.updatable for spec in schema.tensors]
    assert updatable_flags == [False, False, True, True]  # frozen layer present
    params = make_params(schema, seed=1)
    tree = layer_tree_from_schema(schema, params)
    gathered = from_layer_tree(tree, schema)
    assert gathered == params  # includes the non-updatable layer's weights


def test_tree_path_not_found():
    schema = make_schema(dims=((2, 3), (3,)))
    params = make_params(schema)
    tree = layer_tree_from_schema(schema, params)
    missing = dataclasses.replace(schema.tensors[0], layer_path=("dense_9", "0"))
    bad_schema = type(schema)(tensors=(missing, schema.tensors[1]))
    with pytest.raises(PathNotFound):
        from_layer_tree(tree, bad_schema)


def test_tree_write_then_read_round_trip():
    schema = make_schema(dims=((2, 3), (3,), (3, 1), (1,)))
    tree = layer_tree_from_schema(schema, make_params(schema, seed=1))
    replacement = make_params(schema, seed=2)
    written = set_in_layer_tree(tree, replacement, schema)
    assert from_layer_tree(written, schema) == replacement
    # original tree untouched (structural rewrite, not mutation)
    assert from_layer_tree(tree, schema) == make_params(schema, seed=1)


def test_tree_write_reaches_frozen_nodes():
    schema = make_schema(dims=((2, 3), (3,), (3, 1), (1,)), updatable_last_only=True)
    tree = layer_tree_from_schema(schema, make_params(schema, seed=1))
    frozen_node = tree.root.children[0]
    assert not frozen_node.updatable
    replacement = make_params(schema, seed=3)
    written = set_in_layer_tree(tree, replacement, schema)
    assert from_layer_tree(written, schema) == replacement


def test_tree_write_wrong_shape():
    schema = make_schema(dims=((2, 3), (3,)))
    tree = layer_tree_from_schema(schema, make_params(schema))
    other = make_schema(dims=((3, 3), (3,)))
    with pytest.raises(ShapeMismatch):
        set_in_layer_tree(tree, make_params(other), other)


def test_tree_nodes_are_immutable():
    schema = make_schema(dims=((2, 3), (3,)))
    tree = layer_tree_from_schema(schema, make_params(schema))
    node = tree.root.children[0]
    with pytest.raises(dataclasses.FrozenInstanceError):
        node.weights = ()
    assert not node.weights[0].flags.writeable


def test_tree_preserves_structure_names_flags():
    schema = make_schema(dims=((2, 3), (3,), (3, 1), (1,)))
    tree = layer_tree_from_schema(schema, make_params(schema, seed=1))
    written = set_in_layer_tree(tree, make_params(schema, seed=2), schema)

    def skeleton(node):
        return (node.name, node.updatable, tuple(skeleton(c) for c in node.children))

    assert skeleton(written.root) == skeleton(tree.root)


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def test_single_update_is_identity():
    schema = make_schema()
    params = make_params(schema, seed=9)
    out = aggregate_weighted([WeightedUpdate(params=params, num_examples=17, client_id="a")])
    assert out == params


def test_weighted_mean_hand_example():
    # params [1,3] with n=1 and [5,7] with n=3 -> [(1+15)/4, (3+21)/4] = [4,6]
    a = ParameterSet.from_arrays([np.array([1.0, 3.0], dtype=np.float32)])
    b = ParameterSet.from_arrays([np.array([5.0, 7.0], dtype=np.float32)])
    out = aggregate_weighted([
        WeightedUpdate(params=a, num_examples=1, client_id="a"),
        WeightedUpdate(params=b, num_examples=3, client_id="b"),
    ])
    assert out.tensors[0].tolist() == [4.0, 6.0]


def test_equal_weights_match_independent_mean_oracle():
    schema = make_schema(dims=((4, 3), (3,)))
    sets = [make_params(schema, seed=s) for s in range(5)]
    updates = [
        WeightedUpdate(params=p, num_examples=7, client_id=f"c{i}")
        for i, p in enumerate(sets)
    ]
    ours = aggregate_weighted_double(updates)
    for k in range(len(schema.tensors)):
        stack = np.stack([p.tensors[k].astype(np.float64) for p in sets])
        oracle = stack.mean(axis=0)
        rel = np.abs(ours[k] - oracle) / np.maximum(np.abs(oracle), 1e-300)
        assert rel.max() <= 1e-12


def test_aggregation_errors():
    schema = make_schema()
    params = make_params(schema)
    with pytest.raises(EmptyUpdateList):
        aggregate_weighted([])
    other = make_params(make_schema(dims=((3, 3), (3,))))
    with pytest.raises(SchemaMismatch):
        aggregate_weighted([
            WeightedUpdate(params=params, num_examples=1, client_id="a"),
            WeightedUpdate(params=other, num_examples=1, client_id="b"),
        ])
    with pytest.raises(SchemaMismatch):
        WeightedUpdate(params=params, num_examples=0)


def test_non_finite_update_aborts():
    schema = make_schema(dims=((2,),))
    good = ParameterSet.from_arrays([np.array([1.0, 2.0], dtype=np.float32)])
    poisoned = ParameterSet.from_arrays([np.array([1.0, 2.0], dtype=np.float32)])
    object.__setattr__(
        poisoned, "tensors",
        (np.array([np.inf, 2.0], dtype=np.float32),),
    )
    with pytest.raises(NonFiniteValue):
        aggregate_weighted([
            WeightedUpdate(params=good, num_examples=1, client_id="a"),
            WeightedUpdate(params=poisoned, num_examples=1, client_id="b"),
        ])


@given(st.permutations(range(4)))
@settings(max_examples=24, deadline=None)
def test_aggregation_is_permutation_invariant(order):
    schema = make_schema(dims=((3, 2), (2,)))
    updates = [
        WeightedUpdate(params=make_params(schema, seed=i), num_examples=i + 1,
                       client_id=f"client_{i}")
        for i in range(4)
    ]
    baseline = aggregate_weighted(updates)
    shuffled = aggregate_weighted([updates[i] for i in order])
    assert shuffled == baseline  # exact, not approximate


def test_all_equal_params_return_exactly():
    schema = make_schema(dims=((5, 4), (4,)))
    params = make_params(schema, seed=123)
    updates = [
        WeightedUpdate(params=params, num_examples=n, client_id=f"c{n}")
        for n in (1, 30, 400)
    ]
    assert aggregate_weighted(updates) == params


def test_cross_platform_aggregation_equivalence():
    """Canonicalized layout-origin updates aggregate identically to direct ones."""
    schema = make_schema(dims=((2, 3), (3,), (3, 1), (1,)))
    p1, p2 = make_params(schema, seed=4), make_params(schema, seed=5)
    via_map = from_index_map(to_index_map(p1, schema), schema)
    via_tree = from_layer_tree(
        set_in_layer_tree(layer_tree_from_schema(schema, make_params(schema, seed=0)), p2, schema),
        schema,
    )
    mixed = aggregate_weighted([
        WeightedUpdate(params=via_map, num_examples=10, client_id="android"),
        WeightedUpdate(params=via_tree, num_examples=20, client_id="ios"),
    ])
    direct = aggregate_weighted([
        WeightedUpdate(params=p1, num_examples=10, client_id="android"),
        WeightedUpdate(params=p2, num_examples=20, client_id="ios"),
    ])
    assert mixed == direct
