from __future__ import annotations

import io
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from .config import DataFormat, DatasetSpec, LabelColumn
from .errors import InvalidDatasetError, ParseError
from .quality import validate_dataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Dataset:
    """n x d feature matrix with optional contiguous class ids. Arrays are read-only after construction."""

    features: np.ndarray
    labels: np.ndarray | None = None
    name: str = "dataset"
    class_names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        features = np.array(self.features, dtype=np.float64)
        labels = None if self.labels is None else np.array(self.labels, dtype=np.int64)
        validate_dataset(features, labels, self.name)
        features.setflags(write=False)
        if labels is not None:
            labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def d(self) -> int:
        return int(self.features.shape[1])

    @property
    def n_classes(self) -> int | None:
        return None if self.labels is None else int(self.labels.max()) + 1


def read_csv(path: Path, **kwargs: Any) -> pd.DataFrame:
    if not path.exists():
        raise FileNotFoundError(f"Missing file: {path}")
    return pd.read_csv(path, **kwargs)


def write_csv(df: pd.DataFrame, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)


def _encode_labels(raw: pd.Series) -> tuple[np.ndarray, tuple[str, ...]]:
    # first-appearance order keeps ids deterministic for string and integer classes alike
    codes, uniques = pd.factorize(raw.astype(str).str.strip(), sort=False)
    return codes.astype(np.int64), tuple(str(u) for u in uniques)


def _read_text(path: Path) -> str:
    if not path.exists():
        raise FileNotFoundError(f"Missing file: {path}")
    data = path.read_bytes()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"{path}: not valid UTF-8 ({e.reason})", line=data.count(b"\n", 0, e.start) + 1) from e


def _to_float(cell: str) -> float:
    # Python float is correctly rounded, so "%.17g" text reloads to the identical double
    try:
        return float(cell)
    except ValueError:
        return np.nan


def load_csv(
    path: Path,
    label_column: LabelColumn | str = LabelColumn.last,
    skip_header: bool = False,
    name: str | None = None,
) -> Dataset:
    """Load a comma-separated numeric file; the label column may hold integers or class strings.

    Blank lines are skipped; every ParseError carries the physical line number in the file.
    """
    path = Path(path)
    label_column = LabelColumn(label_column)
    lines = _read_text(path).splitlines()
    start = 1 if skip_header else 0
    kept = [(no, line) for no, line in enumerate(lines, start=1) if no > start and line.strip()]
    if not kept:
        raise InvalidDatasetError(f"{path}: empty file")
    line_of = [no for no, _ in kept]

    try:
        raw = pd.read_csv(
            io.StringIO("\n".join(line for _, line in kept)),
            header=None,
            dtype=str,
            keep_default_na=False,
        )
    except pd.errors.ParserError as e:
        # pandas reports "Expected N fields in line L, saw M", L counted in the blank-free text
        match = re.search(r"line (\d+)", str(e))
        line = line_of[int(match.group(1)) - 1] if match else None
        raise ParseError(f"{path}: ragged rows, expected {len(kept[0][1].split(','))} fields", line=line) from e

    # rows shorter than the first row come back padded with NaN
    short = raw.isna().any(axis=1).to_numpy()
    if short.any():
        row = int(np.flatnonzero(short)[0])
        raise ParseError(f"{path}: expected {raw.shape[1]} fields", line=line_of[row])

    labels: np.ndarray | None = None
    class_names: tuple[str, ...] = ()
    if label_column is LabelColumn.first:
        labels, class_names = _encode_labels(raw.iloc[:, 0])
        raw = raw.iloc[:, 1:]
    elif label_column is LabelColumn.last:
        labels, class_names = _encode_labels(raw.iloc[:, -1])
        raw = raw.iloc[:, :-1]

    numeric = raw.apply(lambda col: col.str.strip().map(_to_float))
    bad = numeric.isna().to_numpy()
    if bad.any():
        row, col = (int(i) for i in np.argwhere(bad)[0])
        raise ParseError(f"{path}: non-numeric feature cell {raw.iat[row, col]!r}", line=line_of[row])

    if len(numeric) < 2:
        raise InvalidDatasetError(f"{path}: need at least 2 points, found {len(numeric)}")

    ds = Dataset(numeric.to_numpy(dtype=np.float64), labels, name=name or path.stem, class_names=class_names)
    logger.info("Loaded %s: n=%d d=%d classes=%s", ds.name, ds.n, ds.d, ds.n_classes)
    return ds


def load_libsvm(path: Path, name: str | None = None) -> Dataset:
    """Load ``label idx:val ...`` lines (1-based, strictly ascending indices) into a dense Dataset."""
    path = Path(path)
    raw_labels: list[str] = []
    rows: list[dict[int, float]] = []
    for line_no, raw in enumerate(_read_text(path).splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        feats: dict[int, float] = {}
        last = 0
        for tok in parts[1:]:
            if ":" not in tok:
                raise ParseError(f"{path}: invalid token {tok!r}", line=line_no)
            idx_s, val_s = tok.split(":", 1)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError as exc:
                raise ParseError(f"{path}: invalid token {tok!r}", line=line_no) from exc
            if idx <= last:
                raise ParseError(f"{path}: feature indices must be 1-based and ascending", line=line_no)
            last = idx
            feats[idx] = val
        raw_labels.append(parts[0])
        rows.append(feats)

    if len(rows) < 2:
        raise InvalidDatasetError(f"{path}: need at least 2 points, found {len(rows)}")

    d = max((max(r) for r in rows if r), default=0)
    if d < 1:
        raise InvalidDatasetError(f"{path}: no feature indices present")
    features = np.zeros((len(rows), d), dtype=np.float64)
    for i, feats in enumerate(rows):
        for idx, val in feats.items():
            features[i, idx - 1] = val

    labels, class_names = _encode_labels(pd.Series(raw_labels))
    ds = Dataset(features, labels, name=name or path.stem, class_names=class_names)
    logger.info("Loaded %s: n=%d d=%d classes=%s", ds.name, ds.n, ds.d, ds.n_classes)
    return ds


def load_dataset(spec: DatasetSpec) -> Dataset:
    if spec.format is DataFormat.libsvm:
        ds = load_libsvm(spec.path, name=spec.name)
    else:
        ds = load_csv(spec.path, label_column=spec.label_column, skip_header=spec.skip_header, name=spec.name)
    return standardize(ds) if spec.standardize else ds


def write_dataset_csv(ds: Dataset, path: Path, label_column: LabelColumn | str = LabelColumn.last) -> None:
    """Inverse of load_csv: features keep full float precision, labels are written as class names when known."""
    label_column = LabelColumn(label_column)
    df = pd.DataFrame(ds.features)
    if ds.labels is not None and label_column is not LabelColumn.none:
        names = np.array(ds.class_names, dtype=object) if ds.class_names else None
        labels = names[ds.labels] if names is not None else ds.labels
        if label_column is LabelColumn.first:
            df.insert(0, "label", labels)
        else:
            df["label"] = labels
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, header=False, float_format="%.17g")


def standardize(ds: Dataset) -> Dataset:
    """Columns to mean 0 and sample sd 1; constant columns end at 0 after centering."""
    x = ds.features
    centered = x - x.mean(axis=0)
    constant = np.ptp(x, axis=0) == 0
    sd = np.where(constant, 1.0, x.std(axis=0, ddof=1))
    out = centered / sd
    # centering can leave ~1e-16 residue in constant columns
    out[:, constant] = 0.0
    return Dataset(out, ds.labels, name=ds.name, class_names=ds.class_names)


def write_labels(labels: np.ndarray, path: Path) -> None:
    write_csv(pd.DataFrame({"label": np.asarray(labels, dtype=np.int64)}), path)


def read_labels(path: Path) -> np.ndarray:
    df = read_csv(Path(path))
    column = "label" if "label" in df.columns else df.columns[0]
    return df[column].to_numpy(dtype=np.int64)


def write_matrix_csv(values: np.ndarray, path: Path) -> None:
    """Square or rectangular matrix, one row per line, no header."""
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(values).to_csv(path, index=False, header=False, float_format="%.17g")


def read_matrix_csv(path: Path) -> np.ndarray:
    return read_csv(Path(path), header=None, float_precision="round_trip").to_numpy(dtype=np.float64)
