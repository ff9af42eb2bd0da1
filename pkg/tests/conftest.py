from __future__ import annotations

from pathlib import Path

import pytest

from resample_kernel.io_utils import Dataset, write_dataset_csv
from resample_kernel.sample_data import generate_blobs


@pytest.fixture
def blobs() -> Dataset:
    return generate_blobs(c=3, per_cluster=20, d=2, separation=10.0, noise_sd=0.5, seed=7)


@pytest.fixture
def blobs_csv(tmp_path: Path, blobs: Dataset) -> Path:
    path = tmp_path / "blobs.csv"
    write_dataset_csv(blobs, path)
    return path
