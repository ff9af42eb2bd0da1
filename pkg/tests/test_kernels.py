from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from resample_kernel.config import EncoderConfig, Metric
from resample_kernel.encoder import ClusteringUnit, SparseCode, stack_layers
from resample_kernel.errors import ContractError, DataError, DegenerateScaleError
from resample_kernel.io_utils import Dataset
from resample_kernel.kernels import (
    KernelKind,
    KernelMatrix,
    RbfParams,
    average_pairwise_distance,
    build_linear_kernel,
    build_rbf_kernel,
    build_resample_kernel,
    load_kernel_binary,
    load_kernel_csv,
    normalize_kernel,
    save_kernel_binary,
    save_kernel_csv,
)
from resample_kernel.quality import kernel_diagnostics


def test_resample_kernel_properties_on_random_instances() -> None:
    rng = np.random.default_rng(2024)
    for trial in range(200):
        n = int(rng.integers(2, 51))
        d = int(rng.integers(1, 11))
        V = int(rng.integers(1, 21))
        delta = float(rng.uniform(1.0 / n + 1e-6, 0.99))
        a = float(rng.uniform(0.05, 1.0))
        data = rng.normal(size=(n, d))
        codes = stack_layers(data, EncoderConfig(V=V, delta=delta, a=a, master_seed=trial))
        kernel = build_resample_kernel(codes)
        k = kernel.values

        assert np.array_equal(k, k.T)
        assert (np.diag(k) == V).all()
        assert np.array_equal(k, np.round(k))
        assert k.min() >= 0 and k.max() <= V
        assert np.linalg.eigvalsh(k).min() >= -1e-8 * n
        dense = codes.to_dense()
        assert np.array_equal(k, dense @ dense.T)


def test_resample_kernel_counts_shared_centroids() -> None:
    codes = SparseCode(np.array([[0, 1], [0, 0], [1, 1]]), np.array([2, 2]))
    kernel = build_resample_kernel(codes)
    np.testing.assert_array_equal(kernel.values, [[2, 1, 1], [1, 2, 0], [1, 0, 2]])
    assert kernel.scale == 2


def test_pooled_resample_kernel_matches_serial(blobs: Dataset) -> None:
    codes = stack_layers(blobs.features, EncoderConfig(V=15, delta=0.5, a=1.0, master_seed=8))
    np.testing.assert_array_equal(build_resample_kernel(codes).values, build_resample_kernel(codes, workers=3).values)


def test_normalized_kernel_has_unit_diagonal(blobs: Dataset) -> None:
    codes = stack_layers(blobs.features, EncoderConfig(V=15, delta=0.5, a=1.0, master_seed=8))
    kernel = normalize_kernel(build_resample_kernel(codes))
    assert kernel.kind is KernelKind.resample_normalized
    assert (np.diag(kernel.values) == 1.0).all()
    assert kernel.values.max() <= 1.0


def test_only_resample_kernels_normalize(blobs: Dataset) -> None:
    with pytest.raises(ContractError):
        normalize_kernel(build_linear_kernel(blobs.features))


def test_average_pairwise_distance_excludes_self_pairs() -> None:
    data = np.array([[0.0, 0.0], [3.0, 4.0], [0.0, 0.0]])
    assert average_pairwise_distance(data) == pytest.approx(10.0 / 3.0)


def test_rbf_kernel_properties(blobs: Dataset) -> None:
    params = RbfParams.from_data(blobs.features, 0.5)
    kernel = build_rbf_kernel(blobs.features, params)
    k = kernel.values
    assert kernel.scale == pytest.approx(0.5 * average_pairwise_distance(blobs.features))
    assert np.array_equal(k, k.T)
    assert (np.diag(k) == 1.0).all()
    assert k.min() >= 0.0 and k.max() <= 1.0
    i, j = 0, 45
    expected = np.exp(-np.sum((blobs.features[i] - blobs.features[j]) ** 2) / (2 * params.sigma**2))
    assert k[i, j] == pytest.approx(expected, rel=1e-9)
    assert kernel_diagnostics(k)["psd"]


def test_coincident_points_have_no_rbf_scale() -> None:
    with pytest.raises(DegenerateScaleError):
        RbfParams.from_data(np.ones((4, 2)), 1.0)


def test_kernel_matrix_must_be_symmetric() -> None:
    with pytest.raises(ContractError):
        KernelMatrix(np.array([[1.0, 0.5], [0.4, 1.0]]), KernelKind.linear, 1.0)


def test_binary_export_layout(tmp_path: Path, blobs: Dataset) -> None:
    kernel = build_rbf_kernel(blobs.features, RbfParams.from_data(blobs.features, 1.0))
    path = tmp_path / "kernel.bin"
    save_kernel_binary(kernel, path)
    raw = path.read_bytes()
    assert raw[:4] == b"RKMX"
    assert raw[4] == 1 and raw[5] == 1
    assert len(raw) == 24 + 8 * blobs.n * blobs.n
    loaded = load_kernel_binary(path)
    assert loaded.kind is KernelKind.rbf
    assert loaded.scale == kernel.scale
    np.testing.assert_array_equal(loaded.values, kernel.values)


def test_truncated_binary_is_rejected(tmp_path: Path) -> None:
    path = tmp_path / "kernel.bin"
    path.write_bytes(b"RKMX\x01")
    with pytest.raises(DataError):
        load_kernel_binary(path)


def test_csv_export_keeps_full_precision(tmp_path: Path, blobs: Dataset) -> None:
    kernel = build_rbf_kernel(blobs.features, RbfParams.from_data(blobs.features, 0.25))
    save_kernel_csv(kernel, tmp_path / "kernel.csv")
    loaded = load_kernel_csv(tmp_path / "kernel.csv", "rbf", kernel.scale)
    np.testing.assert_array_equal(loaded.values, kernel.values)


def test_diagnostics_flag_indefinite_matrices() -> None:
    report = kernel_diagnostics(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert report["min_eigenvalue"] == pytest.approx(-1.0)
    assert not report["psd"]
    assert report["diagonal_constant"]


def test_rbf_closed_form_and_distance_scale() -> None:
    data = np.array([[0.0], [1.0], [2.0]])
    assert average_pairwise_distance(data) == pytest.approx(4.0 / 3.0)
    params = RbfParams(sigma_multiplier=1.0 / np.sqrt(2.0), A=np.sqrt(2.0))
    kernel = build_rbf_kernel(np.array([[0.0], [np.sqrt(2.0)]]), params)
    assert params.sigma == pytest.approx(1.0)
    assert kernel.values[0, 1] == pytest.approx(np.exp(-1.0))


def test_rbf_entries_shrink_with_sigma(blobs: Dataset) -> None:
    wide = build_rbf_kernel(blobs.features, RbfParams.from_data(blobs.features, 1.0)).values
    narrow = build_rbf_kernel(blobs.features, RbfParams.from_data(blobs.features, 0.5)).values
    off = ~np.eye(blobs.n, dtype=bool)
    assert (narrow[off] <= wide[off]).all()


def test_kernel_follows_row_permutations(blobs: Dataset) -> None:
    codes = stack_layers(blobs.features, EncoderConfig(V=10, delta=0.5, a=1.0, master_seed=1))
    order = np.random.default_rng(4).permutation(blobs.n)
    shuffled = SparseCode(codes.active_indices[order], codes.block_sizes)
    np.testing.assert_array_equal(
        build_resample_kernel(shuffled).values, build_resample_kernel(codes).values[np.ix_(order, order)]
    )


def test_centroid_order_permutes_columns_and_keeps_the_kernel() -> None:
    rng = np.random.default_rng(13)
    points = rng.normal(size=(30, 4))
    units, shuffled_units = [], []
    for _ in range(6):
        centroids = points[rng.choice(30, size=5, replace=False)]
        perm = rng.permutation(5)
        units.append(ClusteringUnit(np.arange(4), centroids, Metric.squared_euclidean))
        shuffled_units.append((ClusteringUnit(np.arange(4), centroids[perm], Metric.squared_euclidean), perm))

    columns, shuffled_columns = [], []
    for unit, (shuffled, perm) in zip(units, shuffled_units):
        labels, moved = unit.assign(points), shuffled.assign(points)
        # centroid j now sits at position argsort(perm)[j]
        np.testing.assert_array_equal(moved, np.argsort(perm)[labels])
        columns.append(labels)
        shuffled_columns.append(moved)

    sizes = np.full(6, 5)
    kernel = build_resample_kernel(SparseCode(np.column_stack(columns), sizes))
    shuffled_kernel = build_resample_kernel(SparseCode(np.column_stack(shuffled_columns), sizes))
    assert np.array_equal(kernel.values, shuffled_kernel.values)
