"""Reproduction checks on UCI data supplied by the user.

Set RESAMPLE_KERNEL_DATA_DIR to a directory holding ``wine.csv`` (UCI wine.data) and
``new-thyroid.csv`` (UCI new-thyroid.data); both files carry the class in the first column.
"""

from __future__ import annotations

import os
from pathlib import Path

import pytest

from resample_kernel.config import DatasetSpec, ExperimentConfig, LabelColumn, Method, SweepSpec
from resample_kernel.io_utils import Dataset, load_dataset
from resample_kernel.pipeline import best_grid_point, run_experiment, run_sweep

DATA_DIR = os.environ.get("RESAMPLE_KERNEL_DATA_DIR")

pytestmark = pytest.mark.skipif(not DATA_DIR, reason="RESAMPLE_KERNEL_DATA_DIR not set")


def _dataset(filename: str) -> tuple[ExperimentConfig, Dataset]:
    path = Path(DATA_DIR or ".") / filename
    if not path.exists():
        pytest.skip(f"{path} not found")
    spec = DatasetSpec(path=path, label_column=LabelColumn.first)
    return ExperimentConfig(dataset=spec, method=Method.resample, master_seed=0), load_dataset(spec)


def test_wine_proposed_kernel() -> None:
    config, ds = _dataset("wine.csv")
    assert (ds.n, ds.d, ds.n_classes) == (178, 13, 3)
    report = run_experiment(config, dataset=ds).report
    assert report.nmi_mean == pytest.approx(0.6394, abs=0.08)
    assert report.acc_mean == pytest.approx(0.8708, abs=0.08)


def test_new_thyroid_proposed_kernel() -> None:
    config, ds = _dataset("new-thyroid.csv")
    assert (ds.n, ds.d, ds.n_classes) == (215, 5, 3)
    report = run_experiment(config, dataset=ds).report
    assert report.nmi_mean == pytest.approx(0.7408, abs=0.10)
    assert report.acc_mean == pytest.approx(0.9442, abs=0.06)


def test_wine_rbf_sweep_best_point() -> None:
    config, ds = _dataset("wine.csv")
    result = run_sweep(config, SweepSpec(parameter="sigma_multiplier"), dataset=ds)
    best = best_grid_point(result.table, "nmi")
    assert best is not None
    assert best["nmi_mean"] == pytest.approx(0.4302, abs=0.08)


def test_wine_is_insensitive_to_delta_near_its_default() -> None:
    config, ds = _dataset("wine.csv")
    result = run_sweep(config, SweepSpec(parameter="delta", grid=(0.6, 0.7, 0.8)), dataset=ds)
    means = result.table["nmi_mean"].tolist()
    assert max(means) - min(means) < 0.10
