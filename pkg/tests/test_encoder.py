from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from resample_kernel.config import EncoderConfig, Metric
from resample_kernel.encoder import (
    ClusteringUnit,
    assign_one_hot,
    encode,
    encode_stack,
    load_model,
    sample_centroids,
    save_model,
    select_features,
    stack_layers,
    train_ensemble,
    train_stack,
)
from resample_kernel.errors import ConfigError, ContractError
from resample_kernel.io_utils import Dataset
from resample_kernel.seeding import child_rng


def test_select_features_rounds_half_up() -> None:
    rng = np.random.default_rng(0)
    idx = select_features(13, 0.5, rng)
    assert idx.size == 7
    assert np.all(np.diff(idx) > 0)
    assert idx.min() >= 0 and idx.max() < 13


def test_select_features_keeps_at_least_one_and_at_most_d() -> None:
    rng = np.random.default_rng(0)
    assert select_features(3, 0.01, rng).size == 1
    assert select_features(4, 1.0, rng).tolist() == [0, 1, 2, 3]


def test_sample_centroids_draws_distinct_rows() -> None:
    subset = np.arange(20, dtype=float).reshape(10, 2)
    centroids = sample_centroids(subset, 0.7, np.random.default_rng(3))
    assert centroids.shape == (7, 2)
    assert len({tuple(row) for row in centroids}) == 7
    assert all(tuple(row) in {tuple(r) for r in subset} for row in centroids)


def test_sample_centroids_rejects_zero_k() -> None:
    with pytest.raises(ConfigError):
        sample_centroids(np.zeros((10, 1)), 0.05, np.random.default_rng(0))


def test_assignment_ties_go_to_lowest_index() -> None:
    unit = ClusteringUnit(np.array([0]), np.array([[0.0], [2.0]]), Metric.squared_euclidean)
    assert assign_one_hot(np.array([1.0]), unit) == 0
    assert assign_one_hot(np.array([1.5]), unit) == 1


def test_dot_product_assignment_takes_largest_inner_product() -> None:
    unit = ClusteringUnit(np.array([0, 1]), np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), Metric.dot_product)
    np.testing.assert_array_equal(unit.assign(np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])), [0, 1, 2])


def test_unit_rejects_unsorted_features() -> None:
    with pytest.raises(ContractError):
        ClusteringUnit(np.array([1, 0]), np.zeros((2, 2)), Metric.squared_euclidean)


def test_train_ensemble_shapes(blobs: Dataset) -> None:
    config = EncoderConfig(V=25, delta=0.5, a=0.5, master_seed=11)
    model = train_ensemble(blobs.features, config)
    assert model.V == 25
    assert all(u.k == 30 and u.d_hat == 1 for u in model.units)
    assert model.metric is Metric.squared_euclidean


def test_training_is_independent_of_worker_count(blobs: Dataset) -> None:
    config = EncoderConfig(V=30, delta=0.7, a=1.0, master_seed=5)
    single = train_ensemble(blobs.features, config, workers=1)
    pooled = train_ensemble(blobs.features, config, workers=4)
    for u1, u2 in zip(single.units, pooled.units):
        np.testing.assert_array_equal(u1.feature_indices, u2.feature_indices)
        np.testing.assert_array_equal(u1.centroids, u2.centroids)
    np.testing.assert_array_equal(
        encode(single, blobs.features).active_indices, encode(pooled, blobs.features, workers=4).active_indices
    )


def test_different_seeds_give_different_units(blobs: Dataset) -> None:
    a = train_ensemble(blobs.features, EncoderConfig(V=5, delta=0.5, a=1.0, master_seed=1))
    b = train_ensemble(blobs.features, EncoderConfig(V=5, delta=0.5, a=1.0, master_seed=2))
    assert any(not np.array_equal(u.centroids, w.centroids) for u, w in zip(a.units, b.units))


def test_code_has_one_active_entry_per_unit(blobs: Dataset) -> None:
    model = train_ensemble(blobs.features, EncoderConfig(V=12, delta=0.4, a=1.0, master_seed=3))
    code = encode(model, blobs.features)
    h = code.to_sparse()
    assert h.shape == (blobs.n, code.total_dim)
    assert code.total_dim == sum(u.k for u in model.units)
    np.testing.assert_array_equal(np.asarray(h.sum(axis=1)).ravel(), np.full(blobs.n, 12))
    # every block holds exactly one 1
    for v, (start, size) in enumerate(zip(code.offsets, code.block_sizes)):
        block = h[:, start : start + size].toarray()
        np.testing.assert_array_equal(block.argmax(axis=1), code.active_indices[:, v])


def test_training_points_that_are_centroids_encode_to_themselves(blobs: Dataset) -> None:
    model = train_ensemble(blobs.features, EncoderConfig(V=3, delta=0.3, a=1.0, master_seed=9))
    for unit in model.units:
        np.testing.assert_array_equal(unit.assign(unit.centroids), np.arange(unit.k))


def test_stacked_layers_use_dot_product_above_the_first(blobs: Dataset) -> None:
    config = EncoderConfig(V=10, delta=0.5, a=0.5, layers=2, master_seed=4)
    models, code = train_stack(blobs.features, config)
    assert [m.layer_index for m in models] == [1, 2]
    assert models[1].metric is Metric.dot_product
    assert models[1].input_dim == sum(u.k for u in models[0].units)
    assert code.active_indices.shape == (blobs.n, 10)


def test_saved_model_encodes_like_the_trained_one(tmp_path: Path, blobs: Dataset) -> None:
    config = EncoderConfig(V=8, delta=0.6, a=0.5, layers=2, master_seed=21)
    models, code = train_stack(blobs.features, config)
    save_model(models, config, tmp_path / "model.json")
    loaded_config, loaded = load_model(tmp_path / "model.json")
    assert loaded_config == config
    np.testing.assert_array_equal(encode_stack(loaded, blobs.features).active_indices, code.active_indices)


def test_encode_rejects_wrong_dimension(blobs: Dataset) -> None:
    model = train_ensemble(blobs.features, EncoderConfig(V=2, delta=0.5, a=1.0))
    with pytest.raises(ContractError):
        encode(model, np.zeros((3, 5)))


def test_second_layer_matches_brute_force_dot_product_argmax() -> None:
    data = np.random.default_rng(4).normal(size=(12, 3))
    config = EncoderConfig(V=2, delta=0.2, a=1.0, layers=2, master_seed=5)
    models, top = train_stack(data, config)
    assert [u.k for u in models[1].units] == [2, 2]
    below = encode(models[0], data).to_dense()
    for v, unit in enumerate(models[1].units):
        for i in range(data.shape[0]):
            row = below[i, unit.feature_indices]
            scores = [float(row @ centroid) for centroid in unit.centroids]
            best = 0
            for j, score in enumerate(scores):
                if score > scores[best]:
                    best = j
            assert top.active_indices[i, v] == best


def _naive_codes(data: np.ndarray, config: EncoderConfig) -> np.ndarray:
    """One unit at a time, one point at a time, first minimum wins."""
    n, d = data.shape
    blocks = []
    for v in range(config.V):
        rng = child_rng(config.master_seed, 1, v)
        features = select_features(d, config.a, rng)
        centroids = sample_centroids(data[:, features], config.delta, rng)
        block = np.zeros((n, centroids.shape[0]))
        for i in range(n):
            point = data[i, features]
            distances = [sum((point[j] - c[j]) ** 2 for j in range(features.size)) for c in centroids]
            block[i, int(np.argmin(distances))] = 1.0
        blocks.append(block)
    return np.hstack(blocks)


def test_codes_match_a_naive_reference() -> None:
    rng = np.random.default_rng(21)
    for trial in range(20):
        n = int(rng.integers(4, 51))
        d = int(rng.integers(1, 8))
        config = EncoderConfig(
            V=int(rng.integers(1, 11)),
            delta=float(rng.uniform(2.0 / n, 0.9)),
            a=float(rng.uniform(0.2, 1.0)),
            master_seed=trial,
        )
        data = rng.normal(size=(n, d))
        assert np.array_equal(stack_layers(data, config).to_dense(), _naive_codes(data, config))
