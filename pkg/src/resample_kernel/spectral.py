from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh
from scipy.spatial.distance import cdist

from .config import SpectralConfig, settings
from .errors import ConfigError, DegenerateAffinityError, NumericalError
from .kernels import KernelMatrix
from .seeding import KMEANS_STREAM, child_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ClusteringResult:
    labels: np.ndarray
    objective: float
    restarts_run: int
    chosen_restart: int
    # where the clustered points came from, e.g. "spectral:resample_normalized" or "raw"
    embedding: str = "raw"

    def as_record(self) -> dict[str, object]:
        return {
            "objective": self.objective,
            "restarts_run": self.restarts_run,
            "chosen_restart": self.chosen_restart,
            "embedding": self.embedding,
            "n": int(self.labels.size),
        }


def normalized_affinity(kernel: KernelMatrix, zero_diagonal: bool = False) -> np.ndarray:
    """L = D^-1/2 K D^-1/2 with D the row sums of K."""
    k = np.array(kernel.values, dtype=np.float64)
    if zero_diagonal:
        np.fill_diagonal(k, 0.0)
    degrees = k.sum(axis=1)
    isolated = np.flatnonzero(~(degrees > 0))
    if isolated.size:
        raise DegenerateAffinityError(isolated)
    inv_sqrt = 1.0 / np.sqrt(degrees)
    lap = k * inv_sqrt[:, None] * inv_sqrt[None, :]
    return (lap + lap.T) / 2.0


def _top_eigenpairs(lap: np.ndarray, c: int) -> tuple[np.ndarray, np.ndarray]:
    n = lap.shape[0]
    if n <= settings.dense_eigen_limit:
        logger.debug("Dense eigh for n=%d, c=%d", n, c)
        try:
            values, vectors = linalg.eigh(lap, subset_by_index=[n - c, n - 1])
        except linalg.LinAlgError as e:
            raise NumericalError(f"dense eigendecomposition failed: {e}") from e
    else:
        logger.debug("Lanczos eigsh for n=%d, c=%d", n, c)
        v0 = np.full(n, 1.0 / np.sqrt(n))
        try:
            values, vectors = eigsh(lap, k=c, which="LA", tol=settings.eigen_tol, v0=v0)
        except (ArpackNoConvergence, ArpackError) as e:
            raise NumericalError(f"Lanczos eigensolver did not converge: {e}") from e
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]

    residuals = np.linalg.norm(lap @ vectors - vectors * values[None, :], axis=0)
    bound = settings.residual_tol * max(np.linalg.norm(lap, "fro"), np.finfo(float).tiny)
    worst = float(residuals.max())
    if not np.isfinite(worst) or worst > bound:
        raise NumericalError(f"eigen residual {worst:.3e} exceeds {bound:.3e} (residuals {residuals.tolist()})")
    if worst > settings.residual_warn_fraction * bound:
        logger.warning("eigen residual %.3e is close to the bound %.3e (n=%d, c=%d)", worst, bound, n, c)
    return values, vectors


def spectral_embed(kernel: KernelMatrix, c: int, zero_diagonal: bool = False) -> np.ndarray:
    """Top-c eigenvectors of the normalized affinity, rows scaled to unit length (zero rows stay zero)."""
    if c < 1 or kernel.n < c:
        raise ConfigError(f"need 1 <= c <= n, got c={c}, n={kernel.n}")
    _, vectors = _top_eigenpairs(normalized_affinity(kernel, zero_diagonal), c)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    return np.divide(vectors, norms, out=np.zeros_like(vectors), where=norms > 0)


# --- k-means ---


def _kmeans_pp(points: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((c, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = cdist(points, centers[:1], metric="sqeuclidean")[:, 0]
    for j in range(1, c):
        total = closest.sum()
        pick = rng.integers(n) if total <= 0 else rng.choice(n, p=closest / total)
        centers[j] = points[pick]
        closest = np.minimum(closest, cdist(points, centers[j : j + 1], metric="sqeuclidean")[:, 0])
    return centers


def _repair_empty(points: np.ndarray, labels: np.ndarray, d2: np.ndarray, c: int) -> np.ndarray:
    """Give every empty cluster the point farthest from its centroid, taken from a cluster with >= 2 points."""
    labels = labels.copy()
    own = d2[np.arange(labels.size), labels]
    for j in range(c):
        counts = np.bincount(labels, minlength=c)
        if counts[j] > 0:
            continue
        donors = counts[labels] >= 2
        candidate = int(np.argmax(np.where(donors, own, -np.inf)))
        labels[candidate] = j
        own[candidate] = 0.0
    return labels


def _means(points: np.ndarray, labels: np.ndarray, c: int) -> np.ndarray:
    sums = np.zeros((c, points.shape[1]))
    np.add.at(sums, labels, points)
    counts = np.bincount(labels, minlength=c).astype(float)
    return sums / counts[:, None]


def _lloyd(points: np.ndarray, config: SpectralConfig, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    c = config.c
    centers = _kmeans_pp(points, c, rng)
    labels = np.zeros(points.shape[0], dtype=np.int64)
    for _ in range(config.kmeans_max_iters):
        d2 = cdist(points, centers, metric="sqeuclidean")
        labels = _repair_empty(points, d2.argmin(axis=1), d2, c)
        new_centers = _means(points, labels, c)
        shift = float(((new_centers - centers) ** 2).sum())
        centers = new_centers
        if shift < config.kmeans_tol:
            break
    d2 = cdist(points, centers, metric="sqeuclidean")
    labels = _repair_empty(points, d2.argmin(axis=1), d2, c)
    # objective is the within-cluster sum of squares around the means of the returned partition
    centers = _means(points, labels, c)
    objective = float(((points - centers[labels]) ** 2).sum())
    return labels, objective


def kmeans(points: np.ndarray, config: SpectralConfig, embedding: str = "raw", workers: int = 1) -> ClusteringResult:
    """Best of ``kmeans_restarts`` k-means++ seeded Lloyd runs; ties go to the lowest restart index."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < config.c:
        raise ConfigError(f"k-means needs n >= c, got n={n}, c={config.c}")

    def run(restart: int) -> tuple[np.ndarray, float]:
        return _lloyd(points, config, child_rng(config.seed, KMEANS_STREAM, restart))

    restarts = range(config.kmeans_restarts)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(run, restarts))
    else:
        runs = [run(r) for r in restarts]

    objectives = np.array([obj for _, obj in runs])
    logger.debug("k-means objectives per restart: %s", objectives.round(6).tolist())
    best = int(np.argmin(objectives))
    return ClusteringResult(
        labels=runs[best][0],
        objective=float(objectives[best]),
        restarts_run=len(runs),
        chosen_restart=best,
        embedding=embedding,
    )


def spectral_cluster(
    kernel: KernelMatrix,
    config: SpectralConfig,
    zero_diagonal: bool = False,
    workers: int = 1,
    embedding: np.ndarray | None = None,
) -> ClusteringResult:
    """Embed then run k-means; pass a precomputed ``embedding`` of the same kernel to skip the eigensolve."""
    if embedding is None:
        embedding = spectral_embed(kernel, config.c, zero_diagonal=zero_diagonal)
    return kmeans(embedding, config, embedding=f"spectral:{kernel.kind.value}", workers=workers)
