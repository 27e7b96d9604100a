"""
Aggregate every report.json under an output tree into tables and plots.
"""
import logging
from pathlib import Path

import matplotlib
import pandas as pd

from forensics.errors import ProtocolError
from forensics.evaluation.protocol import REPORT_NAME, EvalReport

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

TRACE_TOLERANCE = 1e-9
SUMMARY_COLUMNS = ["protocol", "combination", "seed", "unknown_auroc", "inverse_unknown_auroc", "tosc",
                   "tosc_deepfake_merged", "closed_set_accuracy", "train_accuracy", "lambda_percentile",
                   "config_hash"]


def collect_reports(root):
    """
    Returns:
        list of (report directory, EvalReport), sorted by path
    """
    root = Path(root)
    if not root.is_dir():
        raise ProtocolError(f"Report root {root} does not exist")
    return [(path.parent, EvalReport.load(path)) for path in sorted(root.rglob(REPORT_NAME))]


def verify_traceability(report_dir, report, tolerance=TRACE_TOLERANCE):
    """
    Raises:
        ProtocolError if a stored metric differs from its recomputation
    """
    for name, value in report.recompute(report_dir).items():
        stored = getattr(report, name)
        if abs(stored - value) > tolerance:
            raise ProtocolError(f"{report_dir}: stored {name}={stored} but the score dump gives {value}")


def reports_frame(reports, root=None):
    rows = []
    for report_dir, report in reports:
        row = {column: getattr(report, column) for column in SUMMARY_COLUMNS}
        row["path"] = str(Path(report_dir).relative_to(root)) if root else str(report_dir)
        for method, value in sorted(report.known_class_auroc.items()):
            row[f"known_auroc_{method}"] = value
        for key, value in report.extra.items():
            if isinstance(value, (str, int, float)):
                row[key] = value
        rows.append(row)
    return pd.DataFrame(rows)


def sweep_frame(reports):
    rows = []
    for _, report in reports:
        for entry in report.lambda_sweep:
            rows.append({"protocol": report.protocol, "combination": report.combination,
                         "seed": report.seed, **entry})
    return pd.DataFrame(rows)


def plot_lambda_sweep(frame, path):
    """TOSC and unknown rejection rate against lambda, one line per combination"""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), dpi=120)
    for (protocol, combination), group in frame.groupby(["protocol", "combination"]):
        curve = group.groupby("lambda").mean(numeric_only=True)
        axes[0].plot(curve.index, curve["tosc"], marker="o", label=combination)
        axes[1].plot(curve.index, curve["unknown_rejection_rate"], marker="o", label=combination)
    axes[0].set_ylabel("TOSC accuracy")
    axes[1].set_ylabel("unknown rejection rate")
    for ax in axes:
        ax.set_xlabel("lambda percentile")
        ax.set_ylim(0, 1.02)
        ax.grid(alpha=0.3)
    axes[1].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_ablation(summary, path):
    """Mean unknown AUROC per ablation value"""
    row = summary.loc["mean unknown_auroc"]
    fig, ax = plt.subplots(figsize=(5, 3.5), dpi=120)
    ax.bar([str(c) for c in row.index], row.to_numpy())
    ax.set_xlabel(summary.columns.name or "setting")
    ax.set_ylabel("mean unknown AUROC")
    ax.set_ylim(0, 1)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def render_report(root, callback=None):
    """
    Write summary.csv, summary.txt, lambda_sweep.csv and plots under root.

    Every metric is first checked against its score dump.

    Returns:
        DataFrame of the collected reports
    """
    root = Path(root)
    reports = collect_reports(root)
    if not reports:
        raise ProtocolError(f"No {REPORT_NAME} found under {root}")
    for report_dir, report in reports:
        verify_traceability(report_dir, report)

    summary = reports_frame(reports, root)
    summary.to_csv(root / "summary.csv", index=False)
    grouped = summary.groupby(["protocol", "combination"])[
        ["unknown_auroc", "tosc", "tosc_deepfake_merged", "closed_set_accuracy"]].mean()
    text = summary.drop(columns=["config_hash", "path"]).to_string(index=False, float_format=lambda x: f"{x:.4f}")
    (root / "summary.txt").write_text(text + "\n\nMean over seeds:\n"
                                      + grouped.to_string(float_format=lambda x: f"{x:.4f}") + "\n")

    sweep = sweep_frame(reports)
    if len(sweep):
        sweep.to_csv(root / "lambda_sweep.csv", index=False)
        plot_lambda_sweep(sweep, root / "lambda_sweep.png")

    for summary_path in sorted(root.rglob("ablation_summary.csv")):
        ablation = pd.read_csv(summary_path, index_col=0)
        plot_ablation(ablation, summary_path.with_suffix(".png"))

    logger.info("Report over %d runs written to %s", len(reports), root)
    if callback:
        callback("success", f"Aggregated {len(reports)} reports into {root / 'summary.csv'}")
    return summary
