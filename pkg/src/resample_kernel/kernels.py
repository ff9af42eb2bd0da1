from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist

from .encoder import SparseCode
from .errors import ConfigError, ContractError, DataError, DegenerateScaleError
from .io_utils import read_matrix_csv, write_matrix_csv

logger = logging.getLogger(__name__)

_ROW_BLOCK = 1024


class KernelKind(str, Enum):
    resample = "resample"
    rbf = "rbf"
    linear = "linear"
    resample_normalized = "resample_normalized"


# codes used by the binary export header
_KIND_CODES = {
    KernelKind.resample: 0,
    KernelKind.rbf: 1,
    KernelKind.linear: 2,
    KernelKind.resample_normalized: 3,
}

# Binary layout, little-endian, 24-byte header then n*n float64 row-major:
#   magic "RKMX" | uint8 version (1) | uint8 kind code | uint16 reserved (0) | uint64 n | float64 scale
_BINARY_MAGIC = b"RKMX"
_BINARY_VERSION = 1
_HEADER = np.dtype(
    [("magic", "S4"), ("version", "u1"), ("kind", "u1"), ("reserved", "<u2"), ("n", "<u8"), ("scale", "<f8")]
)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Symmetric n x n similarity matrix. ``scale`` is V for resample kernels and sigma for rbf."""

    values: np.ndarray
    kind: KernelKind
    scale: float

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ContractError(f"kernel must be square, got shape {values.shape}")
        if not np.array_equal(values, values.T):
            raise ContractError("kernel must be exactly symmetric")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", KernelKind(self.kind))
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class RbfParams:
    sigma_multiplier: float
    A: float

    def __post_init__(self) -> None:
        if not self.A > 0:
            raise DegenerateScaleError(f"average pairwise distance A={self.A}; all points coincide")
        if not self.sigma_multiplier > 0:
            raise ConfigError(f"sigma_multiplier must be > 0, got {self.sigma_multiplier}")

    @property
    def sigma(self) -> float:
        return self.sigma_multiplier * self.A

    @classmethod
    def from_data(cls, data: np.ndarray, sigma_multiplier: float) -> RbfParams:
        return cls(sigma_multiplier=sigma_multiplier, A=average_pairwise_distance(data))


def _symmetric(upper_source: np.ndarray) -> np.ndarray:
    # mirror the upper triangle so K(i, j) == K(j, i) bit for bit
    return np.triu(upper_source) + np.triu(upper_source, 1).T


def build_resample_kernel(codes: SparseCode, workers: int = 1) -> KernelMatrix:
    """K(i, j) = number of units on which points i and j share the active centroid (H H^T of the sparse code)."""
    h = codes.to_sparse()
    ht = h.T.tocsr()
    starts = list(range(0, codes.n, _ROW_BLOCK))

    def block(start: int) -> np.ndarray:
        return (h[start : start + _ROW_BLOCK] @ ht).toarray()

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(block, starts))
    else:
        blocks = [block(s) for s in starts]
    values = np.vstack(blocks).astype(np.float64) if blocks else np.zeros((0, 0))
    logger.info("Built resample kernel: n=%d V=%d", codes.n, codes.V)
    return KernelMatrix(values, KernelKind.resample, codes.V)


def normalize_kernel(kernel: KernelMatrix) -> KernelMatrix:
    """Divide a resample kernel by V so the diagonal is 1."""
    if kernel.kind is not KernelKind.resample:
        raise ContractError(f"only resample kernels can be normalized, got {kernel.kind.value}")
    return KernelMatrix(kernel.values / kernel.scale, KernelKind.resample_normalized, kernel.scale)


def average_pairwise_distance(data: np.ndarray) -> float:
    """Mean Euclidean distance over unordered pairs of distinct points (self-pairs excluded)."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise DataError(f"need at least 2 points, got shape {data.shape}")
    return float(pdist(data, metric="euclidean").mean())


def squared_distances(data: np.ndarray) -> np.ndarray:
    """Pairwise squared distances via the norm expansion, clamped at 0 against cancellation."""
    sq = np.einsum("ij,ij->i", data, data)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (data @ data.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def build_rbf_kernel(data: np.ndarray, params: RbfParams) -> KernelMatrix:
    """K(i, j) = exp(-||x_i - x_j||^2 / (2 sigma^2)) with an exact unit diagonal."""
    sigma = params.sigma
    if not sigma > 0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    data = np.asarray(data, dtype=np.float64)
    values = _symmetric(np.exp(-squared_distances(data) / (2.0 * sigma**2)))
    np.fill_diagonal(values, 1.0)
    logger.info("Built rbf kernel: n=%d sigma=%.6g (%.4g * A)", data.shape[0], sigma, params.sigma_multiplier)
    return KernelMatrix(values, KernelKind.rbf, sigma)


def build_linear_kernel(data: np.ndarray) -> KernelMatrix:
    data = np.asarray(data, dtype=np.float64)
    return KernelMatrix(_symmetric(data @ data.T), KernelKind.linear, 1.0)


def save_kernel_csv(kernel: KernelMatrix, path: Path) -> None:
    write_matrix_csv(kernel.values, Path(path))


def load_kernel_csv(path: Path, kind: KernelKind | str, scale: float) -> KernelMatrix:
    return KernelMatrix(read_matrix_csv(Path(path)), KernelKind(kind), scale)


def save_kernel_binary(kernel: KernelMatrix, path: Path) -> None:
    header = np.zeros(1, dtype=_HEADER)
    header["magic"] = _BINARY_MAGIC
    header["version"] = _BINARY_VERSION
    header["kind"] = _KIND_CODES[kernel.kind]
    header["n"] = kernel.n
    header["scale"] = kernel.scale
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        f.write(header.tobytes())
        f.write(np.ascontiguousarray(kernel.values, dtype="<f8").tobytes())


def load_kernel_binary(path: Path) -> KernelMatrix:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Missing file: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.itemsize:
        raise DataError(f"{path}: truncated kernel header")
    header = np.frombuffer(raw[: _HEADER.itemsize], dtype=_HEADER)[0]
    if header["magic"] != _BINARY_MAGIC or header["version"] != _BINARY_VERSION:
        raise DataError(f"{path}: not a version {_BINARY_VERSION} kernel file")
    n = int(header["n"])
    body = np.frombuffer(raw[_HEADER.itemsize :], dtype="<f8")
    if body.size != n * n:
        raise DataError(f"{path}: expected {n * n} values, found {body.size}")
    kinds = {code: kind for kind, code in _KIND_CODES.items()}
    return KernelMatrix(body.reshape(n, n).copy(), kinds[int(header["kind"])], float(header["scale"]))
