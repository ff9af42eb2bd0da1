from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .io_utils import Dataset


def _random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def generate_blobs(
    c: int,
    per_cluster: int,
    d: int,
    separation: float,
    noise_sd: float,
    seed: int,
    name: str | None = None,
) -> Dataset:
    """Isotropic Gaussian clusters whose centers are pairwise at least ``separation`` apart.

    Centers sit on a line with spacing ``separation`` and are then rotated at random, which keeps
    every pairwise center distance a multiple of ``separation``. Rows are grouped by cluster.
    """
    if c < 2:
        raise ConfigError(f"c must be >= 2, got {c}")
    if per_cluster < 1:
        raise ConfigError(f"per_cluster must be >= 1, got {per_cluster}")
    if d < 1:
        raise ConfigError(f"d must be >= 1, got {d}")
    if not separation > 0:
        raise ConfigError(f"separation must be > 0, got {separation}")
    if noise_sd < 0:
        raise ConfigError(f"noise_sd must be >= 0, got {noise_sd}")

    rng = np.random.default_rng(seed)
    centers = np.zeros((c, d))
    centers[:, 0] = separation * np.arange(c)
    centers -= centers.mean(axis=0)
    centers = centers @ _random_rotation(d, rng).T

    labels = np.repeat(np.arange(c), per_cluster)
    features = centers[labels] + noise_sd * rng.standard_normal((c * per_cluster, d))
    return Dataset(features, labels, name=name or f"blobs_c{c}_d{d}_s{seed}")
