from __future__ import annotations

import math
from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .io_utils import read_csv, write_csv  # noqa: E402
from .quality import validate_runs  # noqa: E402

RUNS_COLUMNS = ["dataset", "method", "params", "repetition", "seed", "status", "nmi", "acc", "objective", "error"]
SUMMARY_COLUMNS = [
    "dataset",
    "method",
    "params",
    "nmi_mean",
    "nmi_sd",
    "acc_mean",
    "acc_sd",
    "p_value",
    "runs",
    "failed",
    "single_run",
]
SWEEP_COLUMNS = ["grid_index", "value", "nmi_mean", "nmi_sd", "acc_mean", "acc_sd", "runs", "status"]

# stable element ids, no timestamp: identical inputs give identical SVG bytes
plt.rcParams["svg.hashsalt"] = "resample-kernel"


def write_runs(runs: pd.DataFrame, path: Path) -> None:
    write_csv(validate_runs(runs[RUNS_COLUMNS]), path)


def read_runs(path: Path) -> pd.DataFrame:
    """Load a runs.csv and check it against the same schema it was written with."""
    text_columns = {c: str for c in ("dataset", "method", "params", "seed", "status", "error")}
    runs = validate_runs(read_csv(Path(path), dtype=text_columns))
    # empty params (baselines) and empty errors (ok runs) come back as NaN
    return runs.fillna({"params": "", "error": ""})


def write_summary(summary: pd.DataFrame, path: Path) -> None:
    write_csv(summary[SUMMARY_COLUMNS], path)


def _cell(mean: float, sd: float) -> str:
    if mean is None or (isinstance(mean, float) and math.isnan(mean)):
        return "failed"
    return f"{100 * mean:.2f}%±{100 * sd:.2f}%"


def summary_markdown(summary: pd.DataFrame) -> str:
    """Datasets as rows, one column per method/params, NMI and ACC as separate tables."""
    summary = summary.copy()
    summary["column"] = summary["method"].astype(str)
    has_params = summary["params"].fillna("").astype(str) != ""
    summary.loc[has_params, "column"] += " (" + summary.loc[has_params, "params"].astype(str) + ")"
    columns = list(dict.fromkeys(summary["column"]))
    datasets = list(dict.fromkeys(summary["dataset"]))

    parts: list[str] = []
    for metric in ("nmi", "acc"):
        lines = [f"### {metric.upper()}", "", "| dataset | " + " | ".join(columns) + " |"]
        lines.append("|---" * (len(columns) + 1) + "|")
        for ds in datasets:
            cells = []
            for col in columns:
                row = summary[(summary["dataset"] == ds) & (summary["column"] == col)]
                cells.append(_cell(row.iloc[0][f"{metric}_mean"], row.iloc[0][f"{metric}_sd"]) if len(row) else "")
            lines.append(f"| {ds} | " + " | ".join(cells) + " |")
        parts.append("\n".join(lines))
    return "\n\n".join(parts) + "\n"


def write_summary_markdown(summary: pd.DataFrame, path: Path, extra_lines: Sequence[str] = ()) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = summary_markdown(summary)
    if extra_lines:
        text += "\n" + "\n".join(extra_lines) + "\n"
    path.write_text(text, encoding="utf-8")


def plot_sweep(table: pd.DataFrame, metric: str, path: Path, title: str) -> Path:
    """Line chart of ``<metric>_mean`` against the 1-based grid index; failed points leave gaps (NaN)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ok = table[f"{metric}_mean"].notna()
    if ok.any():
        ax.errorbar(
            table["grid_index"],
            table[f"{metric}_mean"],
            yerr=table[f"{metric}_sd"],
            marker="o",
            capsize=3,
        )
    ax.set_xticks(list(table["grid_index"]))
    ax.set_xlabel("parameter index")
    ax.set_ylabel(metric.upper())
    ax.set_ylim(0.0, 1.05)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
