from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
from sklearn.decomposition import PCA

from .config import ExperimentConfig, Method, SweepSpec, settings
from .encoder import check_recommended_region, stack_layers
from .errors import CannotEvaluateError, ConfigError, NumericalError, ResampleKernelError
from .io_utils import Dataset, load_dataset, write_csv
from .kernels import RbfParams, average_pairwise_distance, build_rbf_kernel, build_resample_kernel, normalize_kernel
from .metrics import MetricsReport, RunMetrics, accuracy, nmi, two_tailed_ttest
from .reporting import (
    RUNS_COLUMNS,
    SUMMARY_COLUMNS,
    SWEEP_COLUMNS,
    plot_sweep,
    write_runs,
    write_summary,
    write_summary_markdown,
)
from .seeding import REPETITION_STREAM, child_seed
from .spectral import ClusteringResult, kmeans, spectral_cluster

logger = logging.getLogger(__name__)

Verdict = Literal["win", "tied", "lose"]


@dataclass(frozen=True)
class RunRecord:
    repetition: int
    seed: int
    status: Literal["ok", "failed"]
    nmi: float = math.nan
    acc: float = math.nan
    objective: float = math.nan
    error: str = ""


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    dataset_name: str
    records: tuple[RunRecord, ...]

    @property
    def report(self) -> MetricsReport:
        return MetricsReport.from_runs(
            [RunMetrics(r.nmi, r.acc) for r in self.records if r.status == "ok"],
            [(r.repetition, r.error) for r in self.records if r.status == "failed"],
        )

    def runs_frame(self) -> pd.DataFrame:
        rows = [
            {
                "dataset": self.dataset_name,
                "method": self.config.method.value,
                "params": self.config.params_label(),
                "repetition": r.repetition,
                "seed": str(r.seed),
                "status": r.status,
                "nmi": r.nmi,
                "acc": r.acc,
                "objective": r.objective,
                "error": r.error,
            }
            for r in self.records
        ]
        return pd.DataFrame(rows, columns=RUNS_COLUMNS)

    def summary_row(self, p_value: float | None = None) -> dict[str, object]:
        report = self.report
        return {
            "dataset": self.dataset_name,
            "method": self.config.method.value,
            "params": self.config.params_label(),
            "nmi_mean": report.nmi_mean,
            "nmi_sd": report.nmi_sd,
            "acc_mean": report.acc_mean,
            "acc_sd": report.acc_sd,
            "p_value": math.nan if p_value is None else p_value,
            "runs": report.runs,
            "failed": len(report.failures),
            "single_run": report.single_run,
        }


@dataclass
class _DatasetContext:
    """Per-dataset quantities shared by every repetition (A, PCA projection)."""

    dataset: Dataset
    c: int
    _scale: float | None = None
    _projection: dict[int, np.ndarray] = field(default_factory=dict)

    def distance_scale(self) -> float:
        if self._scale is None:
            self._scale = average_pairwise_distance(self.dataset.features)
            logger.info("Average pairwise distance A=%.6g for %s", self._scale, self.dataset.name)
        return self._scale

    def projection(self, dims: int) -> np.ndarray:
        dims = min(dims, self.dataset.d, self.dataset.n)
        if dims not in self._projection:
            self._projection[dims] = PCA(n_components=dims, svd_solver="full").fit_transform(self.dataset.features)
        return self._projection[dims]


def repetition_seed(master_seed: int, repetition: int) -> int:
    return child_seed(master_seed, REPETITION_STREAM, repetition)


def _cluster_once(ctx: _DatasetContext, config: ExperimentConfig, seed: int) -> ClusteringResult:
    x = ctx.dataset.features
    spectral_config = config.spectral_config(ctx.c, seed)
    if config.method is Method.resample:
        codes = stack_layers(x, config.encoder_config(seed))
        kernel = normalize_kernel(build_resample_kernel(codes))
        return spectral_cluster(kernel, spectral_config, zero_diagonal=config.zero_diagonal)
    if config.method is Method.rbf:
        params = RbfParams(sigma_multiplier=config.sigma_multiplier, A=ctx.distance_scale())
        return spectral_cluster(build_rbf_kernel(x, params), spectral_config, zero_diagonal=config.zero_diagonal)
    if config.method is Method.kmeans_pca:
        return kmeans(ctx.projection(config.pca_dims or ctx.c), spectral_config, embedding="pca")
    return kmeans(x, spectral_config, embedding="raw")


def _run_repetition(ctx: _DatasetContext, config: ExperimentConfig, repetition: int) -> RunRecord:
    seed = repetition_seed(config.master_seed, repetition)
    truth = ctx.dataset.labels
    assert truth is not None
    try:
        result = _cluster_once(ctx, config, seed)
    except NumericalError as e:
        logger.warning("%s rep %d (%s) failed: %s", config.method.value, repetition, config.params_label(), e)
        return RunRecord(repetition, seed, "failed", error=str(e))
    record = RunRecord(
        repetition,
        seed,
        "ok",
        nmi=nmi(result.labels, truth, average=config.nmi_average),
        acc=accuracy(result.labels, truth),
        objective=result.objective,
    )
    logger.info("%s rep %d: nmi=%.4f acc=%.4f", config.method.value, repetition, record.nmi, record.acc)
    return record


def _context(dataset: Dataset, config: ExperimentConfig) -> _DatasetContext:
    if dataset.labels is None:
        raise CannotEvaluateError(f"{dataset.name}: no ground-truth labels to evaluate against")
    c = config.c if config.c is not None else dataset.n_classes
    assert c is not None
    if c < 2:
        raise CannotEvaluateError(f"{dataset.name}: need at least 2 clusters, truth has {c}")
    return _DatasetContext(dataset, c)


def _repetitions(ctx: _DatasetContext, config: ExperimentConfig) -> ExperimentResult:
    if config.method is Method.resample:
        # fail fast on k = floor(delta * n) = 0 instead of once per repetition
        config.encoder_config(0).k_for(ctx.dataset.n)
    reps = range(config.repetitions)
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(lambda r: _run_repetition(ctx, config, r), reps))
    else:
        records = [_run_repetition(ctx, config, r) for r in reps]
    return ExperimentResult(config, ctx.dataset.name, tuple(records))


def _p_values(results: Sequence[ExperimentResult]) -> list[float | None]:
    """NMI Welch p-value of every result against the best-mean result of its dataset.

    The reference row itself, single-result outputs and rows with fewer than 2 ok runs stay empty.
    """
    reports = [r.report for r in results]
    out: list[float | None] = [None] * len(results)
    for name in dict.fromkeys(r.dataset_name for r in results):
        members = [i for i, r in enumerate(results) if r.dataset_name == name and reports[i].runs >= 2]
        if len(members) < 2:
            continue
        ref = max(members, key=lambda i: reports[i].nmi_mean)
        for i in members:
            if i != ref:
                out[i] = two_tailed_ttest(reports[i].values("nmi"), reports[ref].values("nmi")).p_value
    return out


def _write_experiment_outputs(results: Sequence[ExperimentResult], out_dir: Path) -> None:
    runs = pd.concat([r.runs_frame() for r in results], ignore_index=True)
    rows = [r.summary_row(p) for r, p in zip(results, _p_values(results))]
    summary = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    write_runs(runs, out_dir / "runs.csv")
    write_summary(summary, out_dir / "summary.csv")
    write_summary_markdown(summary, out_dir / "summary.md")


def run_experiment(config: ExperimentConfig, dataset: Dataset | None = None) -> ExperimentResult:
    """Repeat the configured pipeline ``config.repetitions`` times; write runs/summary files when out_dir is set."""
    dataset = dataset if dataset is not None else load_dataset(config.dataset)
    if config.method is Method.resample:
        check_recommended_region(config.encoder_config(config.master_seed))
    result = _repetitions(_context(dataset, config), config)
    if config.out_dir is not None:
        _write_experiment_outputs([result], Path(config.out_dir))
    report = result.report
    logger.info(
        "%s %s: nmi=%.4f±%.4f acc=%.4f±%.4f (%d ok, %d failed)",
        dataset.name,
        config.method.value,
        report.nmi_mean,
        report.nmi_sd,
        report.acc_mean,
        report.acc_sd,
        report.runs,
        len(report.failures),
    )
    return result


def run_baselines(config: ExperimentConfig, dataset: Dataset | None = None) -> dict[str, ExperimentResult]:
    """k-means on raw features and on the top principal components, same restarts and seeds."""
    dataset = dataset if dataset is not None else load_dataset(config.dataset)
    ctx = _context(dataset, config)
    results = {
        method.value: _repetitions(ctx, config.model_copy(update={"method": method}))
        for method in (Method.kmeans_raw, Method.kmeans_pca)
    }
    if config.out_dir is not None:
        _write_experiment_outputs(list(results.values()), Path(config.out_dir))
    return results


# --- sweeps ---


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    table: pd.DataFrame
    points: tuple[ExperimentResult | None, ...]
    errors: tuple[str, ...]

    @property
    def failed_points(self) -> int:
        return int((self.table["status"] != "ok").sum())


def run_sweep(config: ExperimentConfig, sweep: SweepSpec, dataset: Dataset | None = None) -> SweepResult:
    """One experiment per grid value; a failing grid point is recorded and never stops its siblings."""
    dataset = dataset if dataset is not None else load_dataset(config.dataset)
    ctx = _context(dataset, config)
    if sweep.method is Method.resample:
        check_recommended_region(config.encoder_config(config.master_seed))
    rows: list[dict[str, object]] = []
    points: list[ExperimentResult | None] = []
    errors: list[str] = []
    for index, value in enumerate(sweep.grid, start=1):
        point_config = config.model_copy(update={"method": sweep.method, sweep.parameter.value: value})
        try:
            result: ExperimentResult | None = _repetitions(ctx, point_config)
        except ResampleKernelError as e:
            logger.warning("Sweep point %d (%s=%g) failed: %s", index, sweep.parameter.value, value, e)
            result = None
            errors.append(str(e))
        else:
            errors.append("; ".join(msg for _, msg in result.report.failures))
        points.append(result)
        report = result.report if result is not None else MetricsReport.from_runs([])
        rows.append(
            {
                "grid_index": index,
                "value": value,
                "nmi_mean": report.nmi_mean,
                "nmi_sd": report.nmi_sd,
                "acc_mean": report.acc_mean,
                "acc_sd": report.acc_sd,
                "runs": report.runs,
                "status": "ok" if report.runs > 0 else "failed",
            }
        )
        logger.info("Sweep point %d/%d (%s=%g) done", index, len(sweep.grid), sweep.parameter.value, value)

    table = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    out = SweepResult(sweep, table, tuple(points), tuple(errors))
    if config.out_dir is not None:
        out_dir = Path(config.out_dir)
        done = [p for p in points if p is not None]
        if done:
            _write_experiment_outputs(done, out_dir)
        write_csv(table, out_dir / "sweep.csv")
        for metric in ("nmi", "acc"):
            plot_sweep(table, metric, out_dir / f"sweep_{metric}.svg", f"{dataset.name}: {sweep.parameter.value}")
    return out


def best_grid_point(table: pd.DataFrame, metric: str = "nmi") -> pd.Series | None:
    """Max-mean grid row, the assumed protocol behind "optimal" columns; None when every point failed."""
    ok = table[table["status"] == "ok"]
    if ok.empty:
        return None
    return ok.loc[ok[f"{metric}_mean"].idxmax()]


# --- comparisons ---


@dataclass(frozen=True)
class MetricComparison:
    metric: str
    mean_a: float
    mean_b: float
    p_value: float
    verdict: Verdict


@dataclass(frozen=True)
class ComparisonRow:
    nmi: MetricComparison
    acc: MetricComparison

    def as_records(self) -> list[dict[str, object]]:
        return [vars(self.nmi), vars(self.acc)]


def _compare_metric(report_a: MetricsReport, report_b: MetricsReport, metric: str, alpha: float) -> MetricComparison:
    test = two_tailed_ttest(report_a.values(metric), report_b.values(metric), alpha)
    mean_a, mean_b = report_a.mean(metric), report_b.mean(metric)
    verdict: Verdict = "tied"
    if test.significant and mean_a > mean_b:
        verdict = "win"
    elif test.significant and mean_a < mean_b:
        verdict = "lose"
    return MetricComparison(metric, mean_a, mean_b, test.p_value, verdict)


def compare_methods(report_a: MetricsReport, report_b: MetricsReport, alpha: float = settings.alpha) -> ComparisonRow:
    """Verdicts from a's perspective: win/lose need a significant Welch t-test, anything else is tied."""
    return ComparisonRow(
        nmi=_compare_metric(report_a, report_b, "nmi", alpha),
        acc=_compare_metric(report_a, report_b, "acc", alpha),
    )


def verdict_counts(rows: Sequence[ComparisonRow], metric: str = "nmi") -> dict[str, int]:
    counts = {"win": 0, "tied": 0, "lose": 0}
    for row in rows:
        counts[getattr(row, metric).verdict] += 1
    return counts


def verdict_line(counts: dict[str, int]) -> str:
    return f"win:{counts['win']}; tied:{counts['tied']}; lose:{counts['lose']}"


def report_from_runs(runs: pd.DataFrame) -> MetricsReport:
    """Rebuild a MetricsReport from runs.csv rows (one dataset/method/params group)."""
    ok = runs[runs["status"] == "ok"]
    failed = runs[runs["status"] != "ok"]
    return MetricsReport.from_runs(
        [RunMetrics(float(r.nmi), float(r.acc)) for r in ok.itertuples()],
        [(int(r.repetition), str(r.error)) for r in failed.itertuples()],
    )


def _group_label(method: str, params: str) -> str:
    return f"{method} ({params})" if params else method


def best_runs_group(runs: pd.DataFrame, metric: str = "nmi") -> tuple[str, pd.DataFrame]:
    """Split one dataset's runs by (method, params) and keep the group with the best mean ``metric``.

    A single-method runs file yields its only group; a sweep or baselines file yields its best point.
    """
    best: tuple[str, pd.DataFrame] | None = None
    best_mean = -math.inf
    for (method, params), group in runs.groupby(["method", "params"], sort=False):
        ok = group.loc[group["status"] == "ok", metric]
        mean = float(ok.mean()) if len(ok) else -math.inf
        if best is None or mean > best_mean:
            best, best_mean = (_group_label(str(method), str(params)), group), mean
    if best is None:
        raise ConfigError("runs file holds no rows")
    return best


@dataclass(frozen=True)
class DatasetComparison:
    dataset: str
    row: ComparisonRow
    group_a: dict[str, str]
    group_b: dict[str, str]


def compare_runs(runs_a: pd.DataFrame, runs_b: pd.DataFrame, alpha: float = settings.alpha) -> list[DatasetComparison]:
    """Per shared dataset, test the best (method, params) group of each side, chosen separately per metric."""
    out: list[DatasetComparison] = []
    for ds in sorted(set(runs_a["dataset"]) & set(runs_b["dataset"])):
        metrics: dict[str, MetricComparison] = {}
        group_a: dict[str, str] = {}
        group_b: dict[str, str] = {}
        for metric in ("nmi", "acc"):
            label_a, frame_a = best_runs_group(runs_a[runs_a["dataset"] == ds], metric)
            label_b, frame_b = best_runs_group(runs_b[runs_b["dataset"] == ds], metric)
            metrics[metric] = _compare_metric(report_from_runs(frame_a), report_from_runs(frame_b), metric, alpha)
            group_a[metric], group_b[metric] = label_a, label_b
        out.append(DatasetComparison(ds, ComparisonRow(**metrics), group_a, group_b))
    if not out:
        raise ConfigError("the two runs files share no dataset")
    return out
