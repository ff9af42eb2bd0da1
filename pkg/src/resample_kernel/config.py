from __future__ import annotations

import math
from enum import Enum
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator

from .errors import ConfigError


class Settings(BaseModel):
    out_dir: Path = Path("results")
    workers: int = 1
    # above this n the spectral embedding switches from dense eigh to Lanczos (eigsh)
    dense_eigen_limit: int = 3000
    eigen_tol: float = 1e-10
    residual_tol: float = 1e-8
    # a residual above this fraction of the bound is logged as a warning
    residual_warn_fraction: float = 0.1
    psd_tol: float = 1e-8
    alpha: float = 0.05


settings = Settings()


class DataFormat(str, Enum):
    csv = "csv"
    libsvm = "libsvm"


class LabelColumn(str, Enum):
    first = "first"
    last = "last"
    none = "none"


class Method(str, Enum):
    resample = "resample"
    rbf = "rbf"
    kmeans_raw = "kmeans_raw"
    kmeans_pca = "kmeans_pca"


class SweepParameter(str, Enum):
    delta = "delta"
    sigma_multiplier = "sigma_multiplier"


class Metric(str, Enum):
    squared_euclidean = "squared_euclidean"
    dot_product = "dot_product"


NmiAverage = Literal["geometric", "arithmetic"]

DEFAULT_DELTA_GRID: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(1, 10))
DEFAULT_SIGMA_GRID: tuple[float, ...] = tuple(2.0**m for m in range(-4, 5))


def centroid_count(n: int, delta: float) -> int:
    """k = floor(delta * n); the epsilon absorbs binary representation error in delta (0.29 * 100)."""
    return int(math.floor(delta * n + 1e-9))


class EncoderConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    V: int = Field(400, ge=1)
    delta: float = Field(0.7, gt=0.0, lt=1.0)
    a: float = Field(0.5, gt=0.0, le=1.0)
    layers: int = Field(1, ge=1)
    master_seed: int = Field(0, ge=0, lt=2**64)

    def k_for(self, n: int) -> int:
        k = centroid_count(n, self.delta)
        if k < 1:
            raise ConfigError(
                f"delta={self.delta} gives k=floor(delta*n)=0 centroids for n={n}; use delta >= {1.0 / n:.4g}"
            )
        return k


class SpectralConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    c: int = Field(..., ge=2)
    kmeans_restarts: int = Field(50, ge=1)
    kmeans_max_iters: int = Field(300, ge=1)
    kmeans_tol: float = Field(1e-9, ge=0.0)
    seed: int = Field(0, ge=0, lt=2**64)


class DatasetSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    path: Path
    format: DataFormat = DataFormat.csv
    label_column: LabelColumn = LabelColumn.last
    skip_header: bool = False
    standardize: bool = False
    name: str | None = None


class ExperimentConfig(BaseModel):
    """One experiment: a dataset, a method with its parameters, and the repetition protocol."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dataset: DatasetSpec
    method: Method = Method.resample
    delta: float = Field(0.7, gt=0.0, lt=1.0)
    a: float = Field(0.5, gt=0.0, le=1.0)
    V: int = Field(400, ge=1)
    layers: int = Field(1, ge=1)
    sigma_multiplier: float = Field(2.0**-4, gt=0.0)
    c: int | None = Field(None, ge=2)
    repetitions: int = Field(10, ge=1)
    master_seed: int = Field(0, ge=0, lt=2**64)
    out_dir: Path | None = None
    zero_diagonal: bool = False
    pca_dims: int | None = Field(None, ge=1)
    kmeans_restarts: int = Field(50, ge=1)
    kmeans_max_iters: int = Field(300, ge=1)
    kmeans_tol: float = Field(1e-9, ge=0.0)
    nmi_average: NmiAverage = "geometric"
    workers: int = Field(1, ge=1)

    def encoder_config(self, seed: int) -> EncoderConfig:
        return EncoderConfig(V=self.V, delta=self.delta, a=self.a, layers=self.layers, master_seed=seed)

    def spectral_config(self, c: int, seed: int) -> SpectralConfig:
        return SpectralConfig(
            c=c,
            kmeans_restarts=self.kmeans_restarts,
            kmeans_max_iters=self.kmeans_max_iters,
            kmeans_tol=self.kmeans_tol,
            seed=seed,
        )

    def params_label(self) -> str:
        if self.method is Method.resample:
            return f"delta={self.delta:g};a={self.a:g};V={self.V};layers={self.layers}"
        if self.method is Method.rbf:
            return f"sigma_multiplier={self.sigma_multiplier:g}"
        if self.method is Method.kmeans_pca:
            return f"pca_dims={self.pca_dims if self.pca_dims is not None else 'c'}"
        return ""


class SweepSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    parameter: SweepParameter
    # empty means the default grid for ``parameter``
    grid: tuple[float, ...] = Field((), validate_default=True)

    @field_validator("grid", mode="before")
    @classmethod
    def _parse_grid(cls, value: Any) -> Any:
        if isinstance(value, str):
            return tuple(float(v) for v in value.split(",") if v.strip())
        return value

    @field_validator("grid", mode="after")
    @classmethod
    def _fill_and_check_grid(cls, grid: tuple[float, ...], info: ValidationInfo) -> tuple[float, ...]:
        parameter = info.data.get("parameter")
        if not grid:
            grid = DEFAULT_DELTA_GRID if parameter is SweepParameter.delta else DEFAULT_SIGMA_GRID
        for value in grid:
            if parameter is SweepParameter.delta and not 0.0 < value < 1.0:
                raise ValueError(f"delta grid values must lie in (0, 1), got {value}")
            if parameter is SweepParameter.sigma_multiplier and not value > 0.0:
                raise ValueError(f"sigma_multiplier grid values must be > 0, got {value}")
        return grid

    @property
    def method(self) -> Method:
        return Method.resample if self.parameter is SweepParameter.delta else Method.rbf


# "No tuning" profiles: the fixed choices used when free parameters cannot be tuned.
PRESETS: dict[str, dict[str, Any]] = {
    "proposed": {"method": Method.resample, "delta": 0.7, "a": 0.5, "V": 400, "layers": 1},
    "rbf": {"method": Method.rbf, "sigma_multiplier": 2.0**-4},
}


def load_experiment_config(path: Path | None, overrides: dict[str, Any]) -> ExperimentConfig:
    """Merge a JSON config file (optional), a preset (``overrides["preset"]``) and CLI overrides."""
    base: dict[str, Any] = {}
    if path is not None:
        if not Path(path).exists():
            raise FileNotFoundError(f"Missing file: {path}")
        base = ExperimentConfig.model_validate_json(Path(path).read_text(encoding="utf-8")).model_dump()

    preset = overrides.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"Unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        base.update(PRESETS[preset])

    dataset_overrides = {k: overrides.pop(k) for k in list(overrides) if k in DatasetSpec.model_fields}
    dataset = dict(base.get("dataset") or {})
    dataset.update({k: v for k, v in dataset_overrides.items() if v is not None})
    if "path" not in dataset:
        raise ConfigError("No dataset given: pass --dataset or a config file with dataset.path")
    base["dataset"] = dataset
    base.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.model_validate(base)
