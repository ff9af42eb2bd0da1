"""Random k-centroids ensembles and their one-hot sparse codes.

Each clustering unit keeps a random subset of the features and a random subset of the data rows
(restricted to those features) as its centroids; no Lloyd iterations are run. A point is encoded
by the index of its nearest centroid in every unit, so a code has exactly one active entry per unit.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, TypeVar

import numpy as np
from pydantic import BaseModel
from scipy import sparse
from scipy.spatial.distance import cdist

from .config import EncoderConfig, Metric, centroid_count
from .errors import ConfigError, ContractError
from .seeding import child_rng

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1

# bounds the n_chunk x k distance block held in memory during assignment
_ASSIGN_BLOCK = 1 << 22

T = TypeVar("T")


def _map_ordered(fn: Callable[[int], T], items: Iterable[int], workers: int) -> list[T]:
    """Map preserving input order; results never depend on the worker count."""
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True, eq=False)
class ClusteringUnit:
    feature_indices: np.ndarray
    centroids: np.ndarray
    metric: Metric

    def __post_init__(self) -> None:
        idx = np.asarray(self.feature_indices, dtype=np.int64)
        cent = np.asarray(self.centroids, dtype=np.float64)
        if idx.ndim != 1 or idx.size < 1 or np.any(np.diff(idx) <= 0) or idx[0] < 0:
            raise ContractError("feature_indices must be a non-empty strictly increasing list of indices")
        if cent.ndim != 2 or cent.shape[0] < 1 or cent.shape[1] != idx.size:
            raise ContractError(f"centroids must be k x {idx.size}, got shape {cent.shape}")
        if not np.isfinite(cent).all():
            raise ContractError("centroids must be finite")
        idx.setflags(write=False)
        cent.setflags(write=False)
        object.__setattr__(self, "feature_indices", idx)
        object.__setattr__(self, "centroids", cent)
        object.__setattr__(self, "metric", Metric(self.metric))

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def d_hat(self) -> int:
        return int(self.feature_indices.size)

    def assign(self, points: np.ndarray) -> np.ndarray:
        """Nearest-centroid index for every row of ``points`` (already restricted to this unit's features).

        argmin/argmax return the first extremum, which is the lowest-index tie rule.
        """
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != self.d_hat:
            raise ContractError(f"expected points with {self.d_hat} features, got shape {points.shape}")
        out = np.empty(points.shape[0], dtype=np.int64)
        step = max(1, _ASSIGN_BLOCK // self.k)
        for start in range(0, points.shape[0], step):
            block = points[start : start + step]
            if self.metric is Metric.squared_euclidean:
                # cdist sums squared differences directly, so equal distances compare exactly equal
                out[start : start + step] = cdist(block, self.centroids, metric="sqeuclidean").argmin(axis=1)
            else:
                out[start : start + step] = (block @ self.centroids.T).argmax(axis=1)
        return out


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    units: tuple[ClusteringUnit, ...]
    input_dim: int
    layer_index: int = 1

    def __post_init__(self) -> None:
        if not self.units:
            raise ContractError("an ensemble needs at least one unit")
        metrics = {u.metric for u in self.units}
        if len(metrics) != 1:
            raise ContractError(f"all units must share one metric, got {sorted(m.value for m in metrics)}")
        if any(int(u.feature_indices[-1]) >= self.input_dim for u in self.units):
            raise ContractError(f"feature index out of range for input_dim={self.input_dim}")
        object.__setattr__(self, "units", tuple(self.units))

    @property
    def V(self) -> int:
        return len(self.units)

    @property
    def metric(self) -> Metric:
        return self.units[0].metric


@dataclass(frozen=True, eq=False)
class SparseCode:
    """Per point, the active centroid index of every unit (n x V); blocks concatenate to sum(k_v) columns."""

    active_indices: np.ndarray
    block_sizes: np.ndarray

    def __post_init__(self) -> None:
        active = np.asarray(self.active_indices, dtype=np.int64)
        sizes = np.asarray(self.block_sizes, dtype=np.int64)
        if active.ndim != 2 or sizes.ndim != 1 or active.shape[1] != sizes.size:
            raise ContractError(f"active_indices {active.shape} does not match {sizes.size} blocks")
        if np.any(sizes < 1) or np.any(active < 0) or np.any(active >= sizes[None, :]):
            raise ContractError("active index outside its block")
        active.setflags(write=False)
        sizes.setflags(write=False)
        object.__setattr__(self, "active_indices", active)
        object.__setattr__(self, "block_sizes", sizes)

    @property
    def n(self) -> int:
        return int(self.active_indices.shape[0])

    @property
    def V(self) -> int:
        return int(self.active_indices.shape[1])

    @property
    def total_dim(self) -> int:
        return int(self.block_sizes.sum())

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.block_sizes)[:-1])).astype(np.int64)

    def to_sparse(self) -> sparse.csr_matrix:
        """n x total_dim indicator matrix with exactly V ones per row."""
        columns = (self.active_indices + self.offsets[None, :]).ravel()
        indptr = np.arange(0, self.n * self.V + 1, self.V, dtype=np.int64)
        data = np.ones(columns.size, dtype=np.int64)
        return sparse.csr_matrix((data, columns, indptr), shape=(self.n, self.total_dim))

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray().astype(np.float64)


def select_features(d: int, a: float, rng: np.random.Generator) -> np.ndarray:
    """d_hat = max(1, round_half_up(a * d)) distinct feature indices, sorted ascending."""
    if d < 1 or not 0.0 < a <= 1.0:
        raise ConfigError(f"need d >= 1 and 0 < a <= 1, got d={d}, a={a}")
    d_hat = min(d, max(1, int(math.floor(a * d + 0.5 + 1e-9))))
    return np.sort(rng.choice(d, size=d_hat, replace=False)).astype(np.int64)


def sample_centroids(subset: np.ndarray, delta: float, rng: np.random.Generator) -> np.ndarray:
    """k = floor(delta * n) distinct rows of ``subset``, in the order they were drawn."""
    n = subset.shape[0]
    k = centroid_count(n, delta)
    if k < 1:
        raise ConfigError(f"delta={delta} gives k=floor(delta*n)=0 centroids for n={n}; use a larger delta")
    rows = rng.choice(n, size=k, replace=False)
    return np.array(subset[rows], dtype=np.float64)


def assign_one_hot(point: np.ndarray, unit: ClusteringUnit) -> int:
    point = np.asarray(point, dtype=np.float64)
    if point.ndim != 1:
        raise ContractError(f"expected a single {unit.d_hat}-vector, got shape {point.shape}")
    return int(unit.assign(point[None, :])[0])


def _metric_for_layer(layer_index: int) -> Metric:
    return Metric.squared_euclidean if layer_index == 1 else Metric.dot_product


def check_recommended_region(config: EncoderConfig) -> bool:
    """True when a > 0.3 and V > 100; logs one warning otherwise."""
    inside = config.a > 0.3 and config.V > 100
    if not inside:
        logger.warning("a=%s, V=%s lies outside the recommended region a > 0.3, V > 100", config.a, config.V)
    return inside


def train_unit(data: np.ndarray, config: EncoderConfig, layer_index: int, v: int) -> ClusteringUnit:
    rng = child_rng(config.master_seed, layer_index, v)
    features = select_features(data.shape[1], config.a, rng)
    centroids = sample_centroids(data[:, features], config.delta, rng)
    return ClusteringUnit(features, centroids, _metric_for_layer(layer_index))


def train_ensemble(data: np.ndarray, config: EncoderConfig, layer_index: int = 1, workers: int = 1) -> EnsembleModel:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] < 1:
        raise ContractError(f"expected an n x d matrix with d >= 1, got shape {data.shape}")
    if layer_index < 1:
        raise ConfigError(f"layer_index must be >= 1, got {layer_index}")
    k = config.k_for(data.shape[0])

    units = _map_ordered(lambda v: train_unit(data, config, layer_index, v), range(config.V), workers)
    model = EnsembleModel(tuple(units), input_dim=data.shape[1], layer_index=layer_index)
    logger.info(
        "Trained layer %d: V=%d k=%d d_hat=%d metric=%s",
        layer_index,
        model.V,
        k,
        units[0].d_hat,
        model.metric.value,
    )
    return model


def encode(model: EnsembleModel, data: np.ndarray, workers: int = 1) -> SparseCode:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != model.input_dim:
        raise ContractError(f"model expects {model.input_dim} features, got shape {data.shape}")
    columns = _map_ordered(
        lambda v: model.units[v].assign(data[:, model.units[v].feature_indices]), range(model.V), workers
    )
    return SparseCode(np.column_stack(columns), np.array([u.k for u in model.units]))


def train_stack(
    data: np.ndarray, config: EncoderConfig, workers: int = 1
) -> tuple[list[EnsembleModel], SparseCode]:
    """Train ``config.layers`` ensembles, each on the dense code of the layer below; return models and top code."""
    models: list[EnsembleModel] = []
    layer_input = np.asarray(data, dtype=np.float64)
    code: SparseCode | None = None
    for layer_index in range(1, config.layers + 1):
        model = train_ensemble(layer_input, config, layer_index=layer_index, workers=workers)
        code = encode(model, layer_input, workers=workers)
        models.append(model)
        if layer_index < config.layers:
            layer_input = code.to_dense()
    assert code is not None
    return models, code


def stack_layers(data: np.ndarray, config: EncoderConfig, workers: int = 1) -> SparseCode:
    return train_stack(data, config, workers=workers)[1]


def encode_stack(models: Sequence[EnsembleModel], data: np.ndarray, workers: int = 1) -> SparseCode:
    """Inductive encoding of (possibly unseen) points through trained layers."""
    if not models:
        raise ContractError("no layers to encode with")
    layer_input = np.asarray(data, dtype=np.float64)
    code = encode(models[0], layer_input, workers=workers)
    for model in models[1:]:
        code = encode(model, code.to_dense(), workers=workers)
    return code


# --- persistence (JSON, format version 1) ---


class UnitDump(BaseModel):
    feature_indices: list[int]
    centroids: list[list[float]]
    metric: Metric


class LayerDump(BaseModel):
    layer_index: int
    input_dim: int
    units: list[UnitDump]


class ModelDump(BaseModel):
    """On-disk layout: {"format_version": 1, "config": {...EncoderConfig}, "layers": [{layer_index, input_dim,
    units: [{feature_indices, centroids, metric}]}]}. Floats are written with round-trip precision."""

    format_version: Literal[1] = MODEL_FORMAT_VERSION
    config: EncoderConfig
    layers: list[LayerDump]


def save_model(models: Sequence[EnsembleModel], config: EncoderConfig, path: Path) -> None:
    dump = ModelDump(
        config=config,
        layers=[
            LayerDump(
                layer_index=m.layer_index,
                input_dim=m.input_dim,
                units=[
                    UnitDump(
                        feature_indices=u.feature_indices.tolist(),
                        centroids=u.centroids.tolist(),
                        metric=u.metric,
                    )
                    for u in m.units
                ],
            )
            for m in models
        ],
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump.model_dump_json(), encoding="utf-8")


def load_model(path: Path) -> tuple[EncoderConfig, list[EnsembleModel]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Missing file: {path}")
    dump = ModelDump.model_validate_json(path.read_text(encoding="utf-8"))
    models = [
        EnsembleModel(
            tuple(ClusteringUnit(np.array(u.feature_indices), np.array(u.centroids), u.metric) for u in layer.units),
            input_dim=layer.input_dim,
            layer_index=layer.layer_index,
        )
        for layer in dump.layers
    ]
    return dump.config, models
