from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.optimize import linear_sum_assignment
from scipy.special import xlogy

from .config import NmiAverage
from .errors import ConfigError, ContractError


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    """counts[i, j] = points with class i in the first labeling and class j in the second."""

    counts: np.ndarray
    n: int

    @classmethod
    def from_labels(cls, labels_a: np.ndarray, labels_b: np.ndarray) -> ContingencyTable:
        a = np.asarray(labels_a).ravel()
        b = np.asarray(labels_b).ravel()
        if a.size != b.size:
            raise ContractError(f"label vectors differ in length: {a.size} vs {b.size}")
        _, ia = np.unique(a, return_inverse=True)
        _, ib = np.unique(b, return_inverse=True)
        counts = np.zeros((int(ia.max(initial=-1)) + 1, int(ib.max(initial=-1)) + 1), dtype=np.int64)
        np.add.at(counts, (ia.ravel(), ib.ravel()), 1)
        return cls(counts, int(a.size))


def _entropy(marginal: np.ndarray, n: int) -> float:
    p = marginal / n
    return float(-np.sort(xlogy(p, p)).sum())


def nmi(labels_a: np.ndarray, labels_b: np.ndarray, average: NmiAverage = "geometric") -> float:
    """I(A;B) / sqrt(H(A) H(B)) in nats (or / ((H(A)+H(B))/2) with ``average="arithmetic"``).

    Both partitions trivial -> 1; exactly one trivial -> 0. Terms are summed in sorted order so that
    nmi(a, b) == nmi(b, a) bit for bit.
    """
    table = ContingencyTable.from_labels(labels_a, labels_b)
    if table.n < 1:
        raise ContractError("need at least one point")
    n = table.n
    rows = table.counts.sum(axis=1)
    cols = table.counts.sum(axis=0)
    h_a = _entropy(rows, n)
    h_b = _entropy(cols, n)
    if h_a == 0.0 and h_b == 0.0:
        return 1.0
    if h_a == 0.0 or h_b == 0.0:
        return 0.0

    i, j = np.nonzero(table.counts)
    p_ij = table.counts[i, j] / n
    outer = (rows[i] / n) * (cols[j] / n)
    mi = max(0.0, float(np.sort(p_ij * np.log(p_ij / outer)).sum()))
    denom = math.sqrt(h_a * h_b) if average == "geometric" else (h_a + h_b) / 2.0
    return min(1.0, mi / denom)


@dataclass(frozen=True)
class Assignment:
    """Row i of the padded square cost matrix goes to column ``columns[i]``."""

    columns: tuple[int, ...]
    cost: float

    def mapping(self, rows: int | None = None) -> dict[int, int]:
        limit = len(self.columns) if rows is None else rows
        return {i: c for i, c in enumerate(self.columns[:limit])}


def _assignment_cost(cost: np.ndarray) -> float:
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].sum())


def optimal_assignment(cost: np.ndarray, canonical: bool = True) -> Assignment:
    """Minimum-cost perfect matching on the zero-padded square matrix.

    With ``canonical`` the lexicographically smallest optimal column sequence is returned: each row in
    turn takes the lowest column that still admits an optimal completion. That costs O(size^2) extra
    solves, so callers needing only the optimal cost pass ``canonical=False``.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or not np.isfinite(cost).all():
        raise ContractError("cost must be a finite 2-D matrix")
    size = max(cost.shape) if cost.size else 0
    square = np.zeros((size, size))
    square[: cost.shape[0], : cost.shape[1]] = cost
    if size == 0:
        return Assignment((), 0.0)

    if not canonical:
        r, c = linear_sum_assignment(square)
        return Assignment(tuple(int(j) for j in c[np.argsort(r)]), float(square[r, c].sum()))

    best = _assignment_cost(square)
    tol = 1e-9 * max(1.0, abs(best))
    free_cols = list(range(size))
    fixed: list[int] = []
    spent = 0.0
    for row in range(size):
        rest_rows = np.arange(row + 1, size)
        for col in free_cols:
            remaining = [c for c in free_cols if c != col]
            tail = _assignment_cost(square[np.ix_(rest_rows, remaining)]) if remaining else 0.0
            if spent + square[row, col] + tail <= best + tol:
                fixed.append(col)
                spent += square[row, col]
                free_cols.remove(col)
                break
        else:  # pragma: no cover - the optimal completion always exists
            raise ContractError("assignment canonicalization failed")
    return Assignment(tuple(fixed), float(square[np.arange(size), fixed].sum()))


def accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of points matched under the best one-to-one map from predicted to true classes."""
    table = ContingencyTable.from_labels(pred, truth)
    if table.n == 0:
        raise ContractError("need at least one point")
    matched = -optimal_assignment(-table.counts, canonical=False).cost
    return matched / table.n


@dataclass(frozen=True)
class TTestResult:
    p_value: float
    significant: bool
    statistic: float
    df: float


def two_tailed_ttest(sample_a: Sequence[float], sample_b: Sequence[float], alpha: float = 0.05) -> TTestResult:
    """Welch's unequal-variance t-test, two-sided; significant when p < alpha."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ConfigError(f"each sample needs >= 2 values, got {a.size} and {b.size}")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    if va + vb == 0.0:
        same = bool(a.mean() == b.mean())
        p = 1.0 if same else 0.0
        return TTestResult(p, p < alpha, 0.0 if same else math.copysign(math.inf, a.mean() - b.mean()), math.nan)
    res = stats.ttest_ind(a, b, equal_var=False)
    df = (va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    p = float(res.pvalue)
    return TTestResult(p, p < alpha, float(res.statistic), float(df))


@dataclass(frozen=True)
class RunMetrics:
    nmi: float
    acc: float


@dataclass(frozen=True)
class MetricsReport:
    """Mean and sample standard deviation (ddof=1) of per-run NMI/ACC; sd is 0 for a single run."""

    per_run: tuple[RunMetrics, ...]
    failures: tuple[tuple[int, str], ...] = field(default=())

    @classmethod
    def from_runs(cls, per_run: Sequence[RunMetrics], failures: Sequence[tuple[int, str]] = ()) -> MetricsReport:
        return cls(tuple(per_run), tuple(failures))

    @property
    def runs(self) -> int:
        return len(self.per_run)

    @property
    def single_run(self) -> bool:
        return self.runs == 1

    def values(self, metric: str) -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.per_run], dtype=np.float64)

    def mean(self, metric: str) -> float:
        return float(self.values(metric).mean()) if self.runs else math.nan

    def sd(self, metric: str) -> float:
        if self.runs == 0:
            return math.nan
        return float(self.values(metric).std(ddof=1)) if self.runs > 1 else 0.0

    @property
    def nmi_mean(self) -> float:
        return self.mean("nmi")

    @property
    def nmi_sd(self) -> float:
        return self.sd("nmi")

    @property
    def acc_mean(self) -> float:
        return self.mean("acc")

    @property
    def acc_sd(self) -> float:
        return self.sd("acc")

    def summary(self) -> dict[str, float | int | bool]:
        return {
            "nmi_mean": self.nmi_mean,
            "nmi_sd": self.nmi_sd,
            "acc_mean": self.acc_mean,
            "acc_sd": self.acc_sd,
            "runs": self.runs,
            "failed": len(self.failures),
            "single_run": self.single_run,
        }
