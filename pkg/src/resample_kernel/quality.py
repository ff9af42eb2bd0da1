from __future__ import annotations

from typing import Any

import numpy as np
import pandas as pd
import pandera.pandas as pa
from pandera import Check, Column

from .errors import ContractError, InvalidDatasetError


def _all_finite(df: pd.DataFrame) -> bool:
    return bool(np.isfinite(df.to_numpy(dtype=float)).all())


def features_schema() -> pa.DataFrameSchema:
    # Column-level schemas would cost one validator per feature (up to 12600 columns); one frame check suffices.
    return pa.DataFrameSchema(
        checks=[
            Check(lambda df: len(df) >= 2, element_wise=False, error="n >= 2 points required"),
            Check(lambda df: df.shape[1] >= 1, element_wise=False, error="d >= 1 feature required"),
            Check(_all_finite, element_wise=False, error="features must be finite (no NaN/Inf)"),
        ],
    )


def labels_schema(n: int) -> pa.DataFrameSchema:
    return pa.DataFrameSchema(
        {"label": Column(int, checks=Check.ge(0), nullable=False, coerce=True)},
        checks=[
            Check(lambda df: len(df) == n, element_wise=False, error=f"label vector must have length {n}"),
            Check(
                lambda df: df["label"].nunique() == int(df["label"].max()) + 1,
                element_wise=False,
                error="class ids must be contiguous {0..c-1}",
            ),
        ],
        strict=True,
    )


def runs_schema() -> pa.DataFrameSchema:
    """Per-repetition rows written to runs.csv."""
    return pa.DataFrameSchema(
        {
            "dataset": Column(str, nullable=False),
            "method": Column(str, nullable=False),
            "params": Column(str, nullable=True),
            "repetition": Column(int, checks=Check.ge(0), coerce=True),
            "seed": Column(str, nullable=False, coerce=True),
            "status": Column(str, checks=Check.isin(["ok", "failed"])),
            "nmi": Column(float, checks=Check.in_range(0.0, 1.0), nullable=True, coerce=True),
            "acc": Column(float, checks=Check.in_range(0.0, 1.0), nullable=True, coerce=True),
            "objective": Column(float, checks=Check.ge(0.0), nullable=True, coerce=True),
            "error": Column(str, nullable=True),
        },
        strict=True,
    )


def _failure_summary(error: pa.errors.SchemaErrors, dataset_name: str) -> str:
    fc = error.failure_cases
    keep = [c for c in ["column", "check", "failure_case", "index"] if c in fc.columns]
    rows = fc[keep].head(5).to_dict("records")
    return f"{dataset_name}: {len(fc)} validation failure(s), e.g. {rows}"


def validate_dataset(features: np.ndarray, labels: np.ndarray | None, name: str) -> None:
    """Raise InvalidDatasetError collecting every schema failure for the dataset."""
    if features.ndim != 2:
        raise InvalidDatasetError(f"{name}: features must be an n x d matrix, got shape {features.shape}")
    try:
        features_schema().validate(pd.DataFrame(features), lazy=True)
        if labels is not None:
            labels_schema(features.shape[0]).validate(pd.DataFrame({"label": labels}), lazy=True)
    except pa.errors.SchemaErrors as e:
        raise InvalidDatasetError(_failure_summary(e, name)) from e


def validate_runs(runs: pd.DataFrame) -> pd.DataFrame:
    try:
        return runs_schema().validate(runs, lazy=True)
    except pa.errors.SchemaErrors as e:
        raise ContractError(_failure_summary(e, "runs")) from e


def kernel_diagnostics(values: np.ndarray, psd_tol: float = 1e-8) -> dict[str, Any]:
    """Symmetry, spectrum and range summary of a square kernel matrix."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    eigenvalues = np.linalg.eigvalsh((values + values.T) / 2.0)
    min_eig = float(eigenvalues[0]) if n else 0.0
    return {
        "n": n,
        "symmetry_error": float(np.abs(values - values.T).max()) if n else 0.0,
        "min_eigenvalue": min_eig,
        "max_eigenvalue": float(eigenvalues[-1]) if n else 0.0,
        "psd": bool(min_eig >= -psd_tol * n),
        "min_entry": float(values.min()) if n else 0.0,
        "max_entry": float(values.max()) if n else 0.0,
        "diagonal_constant": bool(np.all(np.diag(values) == values[0, 0])) if n else True,
    }
