"""Harness: synthetic data, sharding, package generation, demo orchestration."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from crossfl.harness import datasets, modelgen
from crossfl.harness.datasets import BLOBS, SLEEP, SyntheticTask, generate_shards
from crossfl.harness.demo import DemoConfig, demo_run
from crossfl.model_package import digest_parameters, read_package
from crossfl.trainer import MlpModel


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

def test_generation_is_pure_function_of_kind_n_seed():
    a = datasets.generate_dataset(SyntheticTask(kind=BLOBS, n_examples=50, seed=9))
    b = datasets.generate_dataset(SyntheticTask(kind=BLOBS, n_examples=50, seed=9))
    c = datasets.generate_dataset(SyntheticTask(kind=BLOBS, n_examples=50, seed=10))
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.features, c.features)


def test_sleep_target_is_linear_plus_noise():
    data = datasets.generate_dataset(SyntheticTask(kind=SLEEP, n_examples=400, seed=2))
    x, y = data.features, np.asarray(data.labels)
    # least squares residual should be at the configured noise level
    coef, *_ = np.linalg.lstsq(np.column_stack([x, np.ones(len(y))]), y, rcond=None)
    residual = y - np.column_stack([x, np.ones(len(y))]) @ coef
    assert residual.std() == pytest.approx(0.1, rel=0.3)
    assert 4.0 < y.mean() < 10.0


def test_iid_split_sizes_and_cover():
    task = SyntheticTask(kind=BLOBS, n_examples=100, seed=1)
    shards = generate_shards(task, 2, "iid")
    assert [s.num_examples for s in shards] == [50, 50]
    full = datasets.generate_dataset(task)
    stacked = np.vstack([s.features for s in shards])
    assert sorted(map(tuple, stacked.tolist())) == sorted(map(tuple, full.features.tolist()))


def test_iid_split_remainder():
    task = SyntheticTask(kind=BLOBS, n_examples=101, seed=1)
    shards = generate_shards(task, 3, "iid")
    assert sorted(s.num_examples for s in shards) == [33, 34, 34]


def test_label_skew_majority_fraction():
    task = SyntheticTask(kind=BLOBS, n_examples=200, seed=3)
    for k in (2, 4):
        shards = generate_shards(task, k, "label_skew")
        assert sum(s.num_examples for s in shards) == 200
        for shard in shards:
            labels = np.asarray(shard.labels)
            majority = max(np.bincount(labels, minlength=2)) / len(labels)
            assert majority >= 0.8


def test_label_skew_on_regression_uses_median_split():
    task = SyntheticTask(kind=SLEEP, n_examples=100, seed=4)
    shards = generate_shards(task, 2, "label_skew")
    medians = [float(np.median(np.asarray(s.labels))) for s in shards]
    assert abs(medians[0] - medians[1]) > 0.1  # clearly skewed halves


def test_shards_deterministic():
    task = SyntheticTask(kind=BLOBS, n_examples=64, seed=8)
    a = generate_shards(task, 2, "label_skew")
    b = generate_shards(task, 2, "label_skew")
    for x, y in zip(a, b):
        assert np.array_equal(x.features, y.features)
        assert np.array_equal(np.asarray(x.labels), np.asarray(y.labels))


def test_csv_round_trip_classification(tmp_path):
    task = SyntheticTask(kind=BLOBS, n_examples=20, seed=5)
    shard = generate_shards(task, 1)[0]
    path = tmp_path / "shard.csv"
    datasets.save_shard_csv(shard, path)
    back = datasets.load_shard_csv(path)
    assert np.array_equal(back.features, shard.features)
    assert back.labels.dtype == np.int64
    assert np.array_equal(back.labels, np.asarray(shard.labels))


def test_csv_round_trip_regression(tmp_path):
    task = SyntheticTask(kind=SLEEP, n_examples=20, seed=5)
    shard = generate_shards(task, 1)[0]
    path = tmp_path / "shard.csv"
    datasets.save_shard_csv(shard, path)
    back = datasets.load_shard_csv(path)
    assert np.array_equal(back.features, shard.features)
    assert back.labels.dtype == np.float64
    assert np.array_equal(back.labels, np.asarray(shard.labels))


def test_bad_task_kind_rejected():
    with pytest.raises(ValueError):
        SyntheticTask(kind="mnist", n_examples=10, seed=1)
    with pytest.raises(ValueError):
        SyntheticTask(kind=BLOBS, n_examples=10, seed=1, features=9)


# ---------------------------------------------------------------------------
# package generation
# ---------------------------------------------------------------------------

def test_generated_package_validates_and_has_expected_tensors():
    spec = modelgen.blobs_spec()
    pkg = read_package(modelgen.package_bytes_from_spec(spec))
    names = [t.name for t in pkg.manifest.schema.tensors]
    assert names == [f"parameter_{k}" for k in range(4)]
    # final layer updatable, hidden layer frozen
    flags = [t.updatable for t in pkg.manifest.schema.tensors]
    assert flags == [False, False, True, True]
    assert pkg.manifest.init_scheme == "xavier_uniform"


def test_identical_spec_and_seed_export_identical_bytes():
    spec = modelgen.sleep_spec(seed=77)
    assert modelgen.package_bytes_from_spec(spec) == modelgen.package_bytes_from_spec(spec)


def test_different_seed_changes_digest():
    a = modelgen.package_from_spec(modelgen.blobs_spec(seed=1)).manifest.params_digest
    b = modelgen.package_from_spec(modelgen.blobs_spec(seed=2)).manifest.params_digest
    assert a != b


def test_init_stream_matches_independent_implementation():
    """Frozen contract: any compliant tool must generate these exact weights."""
    MASK = (1 << 64) - 1

    def mix(z):
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def stream(seed):
        state = seed & MASK
        while True:
            state = (state + 0x9E3779B97F4A7C15) & MASK
            yield mix(state)

    import math
    gen = stream(42)
    layers = ((3, 2), (2, 1))
    expected = []
    for fan_in, fan_out in layers:
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        w = [np.float32((2.0 * ((next(gen) >> 11) * 2.0**-53) - 1.0) * bound)
             for _ in range(fan_in * fan_out)]
        expected.append(np.array(w, dtype=np.float32).reshape(fan_in, fan_out))
        expected.append(np.zeros(fan_out, dtype=np.float32))

    from crossfl.model_package import LayerSpec
    got = modelgen.initial_parameters(
        (LayerSpec(3, 2, "relu"), LayerSpec(2, 1, "identity")), seed=42
    )
    for g, e in zip(got.tensors, expected):
        assert np.array_equal(g, e)


def test_generated_package_is_trainable():
    spec = modelgen.sleep_spec()
    pkg = modelgen.package_from_spec(spec)
    model = MlpModel.from_manifest(pkg.manifest, pkg.params)
    task = SyntheticTask(kind=SLEEP, n_examples=32, seed=1)
    shard = generate_shards(task, 1)[0]
    from crossfl.trainer import TrainConfig
    stats = model.train(shard, TrainConfig(epochs=1, batch_size=8, learning_rate=0.05, seed=2))
    assert len(stats.per_epoch_loss) == 1


def test_widen_spec_bumps_version_and_width():
    spec = modelgen.blobs_spec(hidden=16)
    wider = modelgen.widen_spec(spec, hidden=24)
    assert wider["version"] == spec["version"] + 1
    assert wider["layers"][0]["output_dim"] == 24
    assert wider["layers"][1]["input_dim"] == 24
    again = modelgen.widen_spec(wider, hidden=24)
    assert again["version"] == wider["version"] + 1  # explicit redeploys allowed


def test_invalid_spec_dimension_chain_rejected():
    spec = modelgen.blobs_spec()
    spec["layers"][1]["input_dim"] = 99
    with pytest.raises(Exception) as err:
        modelgen.package_bytes_from_spec(spec)
    assert "input_dim" in str(err.value)


# ---------------------------------------------------------------------------
# demo orchestration
# ---------------------------------------------------------------------------

def test_demo_run_smoke(tmp_path, port_range):
    config = DemoConfig(
        rounds=6, examples_per_client=60, out_dir=str(tmp_path),
        port_range=port_range, tasks=(BLOBS,),
    )
    result = demo_run(config)
    assert result.ok, result.failed
    losses = list(csv.DictReader(open(result.losses_path)))
    assert len(losses) == 2 * 6  # two phases x rounds
    assert {row["phase"] for row in losses} == {"v1", "v2"}
    telemetry = list(csv.DictReader(open(result.telemetry_path)))
    assert len(telemetry) == 2 * 6 * 2  # phases x rounds x clients
    assert {row["platform"] for row in telemetry} == {"index_map", "layer_tree"}


def test_demo_numeric_trajectory_is_deterministic(tmp_path, port_range):
    """Same master seed, two runs: losses.csv must match byte for byte."""
    outputs = []
    for i in range(2):
        config = DemoConfig(
            seed=123, rounds=4, examples_per_client=40,
            out_dir=str(tmp_path / f"run{i}"), port_range=port_range,
            tasks=(SLEEP,),
        )
        result = demo_run(config)
        outputs.append(Path(result.losses_path).read_bytes())
    assert outputs[0] == outputs[1]
