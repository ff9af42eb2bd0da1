from __future__ import annotations

import json
import logging
from collections.abc import Iterator
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Optional

import click
import pandas as pd
import typer
from pydantic import ValidationError
from sklearn.decomposition import PCA
from typer import Option, Typer
from typer.core import TyperGroup

from . import __version__
from .config import (
    DataFormat,
    ExperimentConfig,
    LabelColumn,
    Method,
    SweepParameter,
    SweepSpec,
    load_experiment_config,
    settings,
)
from .encoder import check_recommended_region, save_model, train_stack
from .errors import PARTIAL_FAILURE_EXIT_CODE, ConfigError, NumericalError, ResampleKernelError
from .io_utils import (
    load_dataset,
    read_labels,
    write_csv,
    write_dataset_csv,
    write_labels,
    write_matrix_csv,
)
from .kernels import (
    RbfParams,
    build_linear_kernel,
    build_rbf_kernel,
    build_resample_kernel,
    normalize_kernel,
    save_kernel_binary,
    save_kernel_csv,
)
from .metrics import accuracy, nmi
from .pipeline import (
    best_grid_point,
    compare_runs,
    repetition_seed,
    run_baselines,
    run_experiment,
    run_sweep,
    verdict_counts,
    verdict_line,
)
from .quality import kernel_diagnostics
from .reporting import read_runs
from .sample_data import generate_blobs
from .spectral import kmeans, spectral_cluster, spectral_embed

logger = logging.getLogger(__name__)


class _UsageExitGroup(TyperGroup):
    """Usage errors (unknown option, bad choice, missing value) exit 1 like config errors; 2 stays for data."""

    def make_context(self, *args: Any, **kwargs: Any) -> click.Context:
        try:
            return super().make_context(*args, **kwargs)
        except click.UsageError as e:
            e.exit_code = 1
            raise

    def invoke(self, ctx: click.Context) -> Any:
        # subcommand arguments are parsed inside the group's invoke
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = 1
            raise


# Force a multi-command app (group) and show help when no args are given
app = Typer(
    cls=_UsageExitGroup,
    help="Resampled k-centroids kernel learning and spectral clustering",
    no_args_is_help=True,
    add_completion=False,
)


class KernelChoice(str, Enum):
    resample = "resample"
    rbf = "rbf"
    linear = "linear"


ConfigOpt = Annotated[Optional[Path], Option("--config", help="JSON ExperimentConfig; flags override it")]
PresetOpt = Annotated[Optional[str], Option("--preset", help="Named profile: proposed | rbf")]
DatasetOpt = Annotated[Optional[Path], Option("--dataset", help="CSV or LIBSVM data file")]
FormatOpt = Annotated[Optional[DataFormat], Option("--format", help="csv | libsvm")]
LabelColumnOpt = Annotated[Optional[LabelColumn], Option("--label-column", help="first | last | none")]
SkipHeaderOpt = Annotated[bool, Option("--skip-header", help="Skip the first CSV line")]
StandardizeOpt = Annotated[bool, Option("--standardize", help="Scale features to mean 0, sd 1")]
MethodOpt = Annotated[Optional[Method], Option("--method", help="resample | rbf | kmeans_raw | kmeans_pca")]
DeltaOpt = Annotated[Optional[float], Option("--delta", help="Centroid fraction, k = floor(delta*n)")]
AOpt = Annotated[Optional[float], Option("--a", help="Feature fraction per unit")]
VOpt = Annotated[Optional[int], Option("--V", help="Number of clustering units")]
LayersOpt = Annotated[Optional[int], Option("--layers", help="Stacked encoder layers")]
SigmaOpt = Annotated[Optional[float], Option("--sigma-mult", help="RBF width as a multiple of A")]
COpt = Annotated[Optional[int], Option("--c", help="Cluster count (default: number of classes)")]
RepsOpt = Annotated[Optional[int], Option("--reps", help="Repetitions")]
SeedOpt = Annotated[Optional[int], Option("--seed", help="Master seed")]
OutDirOpt = Annotated[Optional[Path], Option("--out-dir", help="Output directory")]
ZeroDiagOpt = Annotated[bool, Option("--zero-diagonal", help="Zero the affinity diagonal before embedding")]
PcaDimsOpt = Annotated[Optional[int], Option("--pca-dims", help="Components kept by the PCA baseline")]
RestartsOpt = Annotated[Optional[int], Option("--restarts", help="k-means restarts")]
WorkersOpt = Annotated[Optional[int], Option("--workers", help="Worker threads")]
NmiAverageOpt = Annotated[Optional[str], Option("--nmi-average", help="geometric | arithmetic")]


@app.callback()
def main(verbose: bool = Option(False, "--verbose", "-v", help="Debug logging")) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


@contextmanager
def _exit_codes() -> Iterator[None]:
    """Map package errors to the documented exit codes: 1 config, 2 data, 3 numerical."""
    try:
        yield
    except ResampleKernelError as e:
        logger.debug("%s -> exit %d", type(e).__name__, e.exit_code)
        typer.echo(f"error: {e}", err=True)
        raise typer.Exit(e.exit_code) from e
    except ValidationError as e:
        typer.echo(f"invalid configuration:\n{e}", err=True)
        raise typer.Exit(1) from e
    except FileNotFoundError as e:
        typer.echo(f"error: {e}", err=True)
        raise typer.Exit(2) from e


def _config(
    config: Path | None,
    preset: str | None,
    dataset: Path | None,
    format: DataFormat | None,
    label_column: LabelColumn | None,
    skip_header: bool,
    standardize: bool,
    **fields: Any,
) -> ExperimentConfig:
    renames = {
        "sigma_mult": "sigma_multiplier",
        "reps": "repetitions",
        "seed": "master_seed",
        "restarts": "kmeans_restarts",
    }
    overrides: dict[str, Any] = {
        "preset": preset,
        "path": dataset,
        "format": format,
        "label_column": label_column,
        # flags only switch on; a config file value stays unless the flag is given
        "skip_header": skip_header or None,
        "standardize": standardize or None,
    }
    for key, value in fields.items():
        if isinstance(value, bool):
            value = value or None
        overrides[renames.get(key, key)] = value
    cfg = load_experiment_config(config, overrides)
    if cfg.out_dir is None:
        cfg = cfg.model_copy(update={"out_dir": settings.out_dir})
    return cfg


@app.command("experiment")
def experiment_cmd(
    config: ConfigOpt = None,
    preset: PresetOpt = None,
    dataset: DatasetOpt = None,
    format: FormatOpt = None,
    label_column: LabelColumnOpt = None,
    skip_header: SkipHeaderOpt = False,
    standardize: StandardizeOpt = False,
    method: MethodOpt = None,
    delta: DeltaOpt = None,
    a: AOpt = None,
    V: VOpt = None,
    layers: LayersOpt = None,
    sigma_mult: SigmaOpt = None,
    c: COpt = None,
    reps: RepsOpt = None,
    seed: SeedOpt = None,
    out_dir: OutDirOpt = None,
    zero_diagonal: ZeroDiagOpt = False,
    pca_dims: PcaDimsOpt = None,
    restarts: RestartsOpt = None,
    workers: WorkersOpt = None,
    nmi_average: NmiAverageOpt = None,
) -> None:
    """
    Run repeated clustering with one method and report NMI/ACC mean ± sd.

    Example:
      resample-kernel experiment --dataset wine.csv --label-column first --preset proposed --out-dir results/wine
    """
    with _exit_codes():
        cfg = _config(
            config, preset, dataset, format, label_column, skip_header, standardize,
            method=method, delta=delta, a=a, V=V, layers=layers, sigma_mult=sigma_mult, c=c, reps=reps,
            seed=seed, out_dir=out_dir, zero_diagonal=zero_diagonal, pca_dims=pca_dims,
            restarts=restarts, workers=workers, nmi_average=nmi_average,
        )  # fmt: skip
        result = run_experiment(cfg)
        report = result.report
        typer.echo(
            f"{result.dataset_name} {cfg.method.value} {cfg.params_label()}: "
            f"NMI {report.nmi_mean:.4f}±{report.nmi_sd:.4f}  ACC {report.acc_mean:.4f}±{report.acc_sd:.4f}  "
            f"runs={report.runs} failed={len(report.failures)}"
        )
        if report.runs == 0:
            raise NumericalError("every repetition failed")


@app.command("sweep")
def sweep_cmd(
    param: Annotated[SweepParameter, Option("--param", help="delta | sigma_multiplier")] = SweepParameter.delta,
    grid: Annotated[Optional[str], Option("--grid", help="Comma-separated values (default: standard grid)")] = None,
    config: ConfigOpt = None,
    preset: PresetOpt = None,
    dataset: DatasetOpt = None,
    format: FormatOpt = None,
    label_column: LabelColumnOpt = None,
    skip_header: SkipHeaderOpt = False,
    standardize: StandardizeOpt = False,
    a: AOpt = None,
    V: VOpt = None,
    layers: LayersOpt = None,
    c: COpt = None,
    reps: RepsOpt = None,
    seed: SeedOpt = None,
    out_dir: OutDirOpt = None,
    zero_diagonal: ZeroDiagOpt = False,
    restarts: RestartsOpt = None,
    workers: WorkersOpt = None,
    nmi_average: NmiAverageOpt = None,
) -> None:
    """
    Sweep delta (resample kernel) or sigma (RBF kernel) over a grid; writes sweep.csv and SVG charts.

    Example:
      resample-kernel sweep --dataset wine.csv --label-column first --param delta --out-dir results/wine_delta
    """
    with _exit_codes():
        cfg = _config(
            config, preset, dataset, format, label_column, skip_header, standardize,
            a=a, V=V, layers=layers, c=c, reps=reps, seed=seed, out_dir=out_dir,
            zero_diagonal=zero_diagonal, restarts=restarts, workers=workers, nmi_average=nmi_average,
        )  # fmt: skip
        spec = SweepSpec(parameter=param, grid=grid or ())
        result = run_sweep(cfg, spec)
        typer.echo(result.table.to_string(index=False))
        best = best_grid_point(result.table, "nmi")
        if best is not None:
            typer.echo(f"best NMI at index {int(best['grid_index'])} ({param.value}={best['value']:g})")
        if result.failed_points:
            typer.echo(f"warning: {result.failed_points} of {len(spec.grid)} grid points failed", err=True)
            raise typer.Exit(PARTIAL_FAILURE_EXIT_CODE)


@app.command("baselines")
def baselines_cmd(
    config: ConfigOpt = None,
    dataset: DatasetOpt = None,
    format: FormatOpt = None,
    label_column: LabelColumnOpt = None,
    skip_header: SkipHeaderOpt = False,
    standardize: StandardizeOpt = False,
    c: COpt = None,
    reps: RepsOpt = None,
    seed: SeedOpt = None,
    out_dir: OutDirOpt = None,
    pca_dims: PcaDimsOpt = None,
    restarts: RestartsOpt = None,
    workers: WorkersOpt = None,
    nmi_average: NmiAverageOpt = None,
) -> None:
    """Run the k-means and k-means+PCA baselines."""
    with _exit_codes():
        cfg = _config(
            config, None, dataset, format, label_column, skip_header, standardize,
            c=c, reps=reps, seed=seed, out_dir=out_dir, pca_dims=pca_dims,
            restarts=restarts, workers=workers, nmi_average=nmi_average,
        )  # fmt: skip
        for name, result in run_baselines(cfg).items():
            report = result.report
            typer.echo(
                f"{name}: NMI {report.nmi_mean:.4f}±{report.nmi_sd:.4f}  ACC {report.acc_mean:.4f}±{report.acc_sd:.4f}"
            )


@app.command("compare")
def compare_cmd(
    runs_a: Annotated[Path, Option("--runs-a", help="runs.csv of method A")],
    runs_b: Annotated[Path, Option("--runs-b", help="runs.csv of method B")],
    alpha: Annotated[float, Option("--alpha", help="Significance level")] = settings.alpha,
    out: Annotated[Optional[Path], Option("--out", help="Write the comparison CSV here")] = None,
) -> None:
    """
    Welch t-test of two runs.csv files, per dataset; prints win/tied/lose from A's perspective.

    A file holding several (method, params) groups, such as a sweep or the baselines, contributes its
    best-mean group per metric.
    """
    with _exit_codes():
        comparisons = compare_runs(read_runs(runs_a), read_runs(runs_b), alpha)
        records: list[dict[str, object]] = []
        for item in comparisons:
            for rec in item.row.as_records():
                metric = str(rec["metric"])
                groups = {"group_a": item.group_a[metric], "group_b": item.group_b[metric]}
                records.append({"dataset": item.dataset, **groups, **rec})
                typer.echo(
                    f"{item.dataset} {metric}: {rec['mean_a']:.4f} vs {rec['mean_b']:.4f}  "
                    f"p={rec['p_value']:.4g}  {rec['verdict']}  [{item.group_a[metric]} vs {item.group_b[metric]}]"
                )
        rows = [item.row for item in comparisons]
        for metric in ("nmi", "acc"):
            typer.echo(f"summary {metric}: {verdict_line(verdict_counts(rows, metric))}")
        if out is not None:
            write_csv(pd.DataFrame(records), out)


@app.command("encode")
def encode_cmd(
    config: ConfigOpt = None,
    dataset: DatasetOpt = None,
    format: FormatOpt = None,
    label_column: LabelColumnOpt = None,
    skip_header: SkipHeaderOpt = False,
    standardize: StandardizeOpt = False,
    delta: DeltaOpt = None,
    a: AOpt = None,
    V: VOpt = None,
    layers: LayersOpt = None,
    seed: SeedOpt = None,
    out_dir: OutDirOpt = None,
    workers: WorkersOpt = None,
) -> None:
    """Train the ensemble encoder; writes model.json and codes.csv (active centroid index per unit)."""
    with _exit_codes():
        cfg = _config(
            config, None, dataset, format, label_column, skip_header, standardize,
            delta=delta, a=a, V=V, layers=layers, seed=seed, out_dir=out_dir, workers=workers,
        )  # fmt: skip
        ds = load_dataset(cfg.dataset)
        encoder_config = cfg.encoder_config(cfg.master_seed)
        check_recommended_region(encoder_config)
        models, codes = train_stack(ds.features, encoder_config, workers=cfg.workers)
        target = Path(cfg.out_dir)
        save_model(models, encoder_config, target / "model.json")
        write_matrix_csv(codes.active_indices, target / "codes.csv")
        typer.echo(f"{ds.name}: n={codes.n} V={codes.V} total_dim={codes.total_dim} -> {target}")


@app.command("kernel")
def kernel_cmd(
    kind: Annotated[KernelChoice, Option("--kind", help="resample | rbf | linear")] = KernelChoice.resample,
    binary: Annotated[bool, Option("--binary", help="Write kernel.bin instead of kernel.csv")] = False,
    normalize: Annotated[bool, Option("--normalize", help="Divide resample kernels by V")] = False,
    config: ConfigOpt = None,
    dataset: DatasetOpt = None,
    format: FormatOpt = None,
    label_column: LabelColumnOpt = None,
    skip_header: SkipHeaderOpt = False,
    standardize: StandardizeOpt = False,
    delta: DeltaOpt = None,
    a: AOpt = None,
    V: VOpt = None,
    layers: LayersOpt = None,
    sigma_mult: SigmaOpt = None,
    seed: SeedOpt = None,
    out_dir: OutDirOpt = None,
    workers: WorkersOpt = None,
) -> None:
    """Build a kernel matrix and print its diagnostics (symmetry, min eigenvalue, range)."""
    with _exit_codes():
        cfg = _config(
            config, None, dataset, format, label_column, skip_header, standardize,
            delta=delta, a=a, V=V, layers=layers, sigma_mult=sigma_mult, seed=seed,
            out_dir=out_dir, workers=workers,
        )  # fmt: skip
        ds = load_dataset(cfg.dataset)
        if kind is KernelChoice.resample:
            check_recommended_region(cfg.encoder_config(cfg.master_seed))
            _, codes = train_stack(ds.features, cfg.encoder_config(cfg.master_seed), workers=cfg.workers)
            km = build_resample_kernel(codes, workers=cfg.workers)
            km = normalize_kernel(km) if normalize else km
        elif kind is KernelChoice.rbf:
            km = build_rbf_kernel(ds.features, RbfParams.from_data(ds.features, cfg.sigma_multiplier))
        else:
            km = build_linear_kernel(ds.features)
        target = Path(cfg.out_dir)
        path = target / ("kernel.bin" if binary else "kernel.csv")
        (save_kernel_binary if binary else save_kernel_csv)(km, path)
        diagnostics = kernel_diagnostics(km.values, settings.psd_tol)
        typer.echo(json.dumps({"kind": km.kind.value, "scale": km.scale, **diagnostics}))
        typer.echo(f"-> {path}")


@app.command("cluster")
def cluster_cmd(
    config: ConfigOpt = None,
    preset: PresetOpt = None,
    dataset: DatasetOpt = None,
    format: FormatOpt = None,
    label_column: LabelColumnOpt = None,
    skip_header: SkipHeaderOpt = False,
    standardize: StandardizeOpt = False,
    method: MethodOpt = None,
    delta: DeltaOpt = None,
    a: AOpt = None,
    V: VOpt = None,
    layers: LayersOpt = None,
    sigma_mult: SigmaOpt = None,
    c: COpt = None,
    seed: SeedOpt = None,
    out_dir: OutDirOpt = None,
    zero_diagonal: ZeroDiagOpt = False,
    pca_dims: PcaDimsOpt = None,
    restarts: RestartsOpt = None,
    workers: WorkersOpt = None,
    nmi_average: NmiAverageOpt = None,
) -> None:
    """Cluster once (repetition 0 seed); writes labels.csv, result.csv and, for kernels, embedding.csv."""
    with _exit_codes():
        cfg = _config(
            config, preset, dataset, format, label_column, skip_header, standardize,
            method=method, delta=delta, a=a, V=V, layers=layers, sigma_mult=sigma_mult, c=c, seed=seed,
            out_dir=out_dir, zero_diagonal=zero_diagonal, pca_dims=pca_dims,
            restarts=restarts, workers=workers, nmi_average=nmi_average,
        )  # fmt: skip
        ds = load_dataset(cfg.dataset)
        n_clusters = cfg.c or ds.n_classes
        if n_clusters is None:
            raise ConfigError("no labels in the dataset: pass --c")
        rep_seed = repetition_seed(cfg.master_seed, 0)
        spectral_config = cfg.spectral_config(n_clusters, rep_seed)
        target = Path(cfg.out_dir)

        if cfg.method in (Method.resample, Method.rbf):
            if cfg.method is Method.resample:
                check_recommended_region(cfg.encoder_config(rep_seed))
                _, codes = train_stack(ds.features, cfg.encoder_config(rep_seed), workers=cfg.workers)
                km = normalize_kernel(build_resample_kernel(codes, workers=cfg.workers))
            else:
                km = build_rbf_kernel(ds.features, RbfParams.from_data(ds.features, cfg.sigma_multiplier))
            embedding = spectral_embed(km, n_clusters, zero_diagonal=cfg.zero_diagonal)
            write_matrix_csv(embedding, target / "embedding.csv")
            result = spectral_cluster(
                km, spectral_config, zero_diagonal=cfg.zero_diagonal, workers=cfg.workers, embedding=embedding
            )
        elif cfg.method is Method.kmeans_pca:
            dims = min(cfg.pca_dims or n_clusters, ds.d, ds.n)
            projected = PCA(n_components=dims, svd_solver="full").fit_transform(ds.features)
            result = kmeans(projected, spectral_config, embedding="pca", workers=cfg.workers)
        else:
            result = kmeans(ds.features, spectral_config, embedding="raw", workers=cfg.workers)

        write_labels(result.labels, target / "labels.csv")
        record = result.as_record()
        if ds.labels is not None:
            record.update(
                nmi=nmi(result.labels, ds.labels, average=cfg.nmi_average), acc=accuracy(result.labels, ds.labels)
            )
        write_csv(pd.DataFrame([record]), target / "result.csv")
        typer.echo(" ".join(f"{k}={v}" for k, v in record.items()))


@app.command("evaluate")
def evaluate_cmd(
    pred: Annotated[Path, Option("--pred", help="Predicted labels CSV (column 'label')")],
    truth: Annotated[Optional[Path], Option("--truth", help="True labels CSV")] = None,
    dataset: DatasetOpt = None,
    format: FormatOpt = DataFormat.csv,
    label_column: LabelColumnOpt = LabelColumn.last,
    skip_header: SkipHeaderOpt = False,
    nmi_average: NmiAverageOpt = "geometric",
) -> None:
    """NMI and ACC of predicted labels against a truth file or the labels of a dataset."""
    with _exit_codes():
        predicted = read_labels(pred)
        if truth is not None:
            reference = read_labels(truth)
        elif dataset is not None:
            cfg = _config(None, None, dataset, format, label_column, skip_header, False)
            labels = load_dataset(cfg.dataset).labels
            if labels is None:
                raise ConfigError("the dataset has no label column; pass --truth")
            reference = labels
        else:
            raise ConfigError("pass --truth or --dataset")
        average = "arithmetic" if nmi_average == "arithmetic" else "geometric"
        typer.echo(f"nmi={nmi(predicted, reference, average=average):.6f} acc={accuracy(predicted, reference):.6f}")


@app.command("generate")
def generate_cmd(
    out: Annotated[Path, Option("--out", help="Output CSV (label in the last column)")],
    c: Annotated[int, Option("--c", help="Clusters")] = 3,
    per_cluster: Annotated[int, Option("--per-cluster")] = 60,
    d: Annotated[int, Option("--d", help="Dimension")] = 2,
    separation: Annotated[float, Option("--separation")] = 10.0,
    noise_sd: Annotated[float, Option("--noise-sd")] = 0.5,
    seed: Annotated[int, Option("--seed")] = 0,
) -> None:
    """Write a synthetic Gaussian-blob dataset."""
    with _exit_codes():
        ds = generate_blobs(c, per_cluster, d, separation, noise_sd, seed)
        write_dataset_csv(ds, out)
        typer.echo(f"{ds.name}: n={ds.n} d={ds.d} -> {out}")


@app.command("schema")
def schema_cmd() -> None:
    """Print the JSON schema of experiment config files."""
    typer.echo(json.dumps(ExperimentConfig.model_json_schema(), indent=2))


@app.command("version")
def version_cmd() -> None:
    """Show CLI version."""
    try:
        from importlib.metadata import version

        typer.echo(f"resample-kernel {version('resample-kernel')}")
    except Exception:
        typer.echo(f"resample-kernel {__version__}")


if __name__ == "__main__":
    app()
