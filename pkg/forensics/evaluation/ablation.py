"""
Ablations: one cross-manipulation run per axis value and seed, with every
other setting and every seed shared, summarised side by side.
"""
import logging
from enum import Enum
from pathlib import Path

import pandas as pd

from forensics import settings
from forensics.config import with_overrides
from forensics.data.datamodel import LabelScheme
from forensics.evaluation.protocol import load_manifest, run_cross_manipulation
from forensics.representation.losses import LossVariant

logger = logging.getLogger(__name__)

METRICS = ["unknown_auroc", "tosc", "tosc_deepfake_merged", "closed_set_accuracy"]


class AblationAxis(str, Enum):
    ALPHA = "alpha"
    SCHEME_STAGE1 = "scheme-stage1"
    SCHEME_STAGE3 = "scheme-stage3"
    REPR_METHOD = "repr-method"


DEFAULT_VALUES = {
    AblationAxis.ALPHA: settings.ALPHA_GRID,
    AblationAxis.SCHEME_STAGE1: (LabelScheme.FORGERY_SPECIFIC.value, LabelScheme.BINARY.value),
    AblationAxis.SCHEME_STAGE3: (LabelScheme.FORGERY_SPECIFIC.value, LabelScheme.BINARY.value),
    AblationAxis.REPR_METHOD: tuple(v.value for v in LossVariant),
}


def parse_values(axis, values):
    """Coerce CLI strings to the axis' value type"""
    axis = AblationAxis(axis)
    if axis is AblationAxis.ALPHA:
        return [float(v) for v in values]
    if axis is AblationAxis.REPR_METHOD:
        return [LossVariant(str(v).upper()).value for v in values]
    return [LabelScheme(str(v).upper()).value for v in values]


def setting_config(config, axis, value, seed):
    """
    RunConfig of one ablation cell.

    The Stage-3 scheme is the label scheme of the classifier whose softmax
    outputs are thresholded, i.e. the Stage-2 classifier.
    """
    axis = AblationAxis(axis)
    if axis is AblationAxis.ALPHA:
        return with_overrides(config, seed=seed, alpha=value)
    if axis is AblationAxis.SCHEME_STAGE1:
        return with_overrides(config, seed=seed, stage1_scheme=value)
    if axis is AblationAxis.SCHEME_STAGE3:
        return with_overrides(config, seed=seed, stage2_scheme=value)
    return with_overrides(config, seed=seed, variant=value)


def run_ablation(config, axis, values=None, seeds=(0,), out_dir=None, manifest=None, callback=None):
    """
    Run the cross-manipulation protocol for every (value, seed) cell.

    Args:
        config: Base RunConfig
        axis: AblationAxis
        values: Axis values (the axis' default grid when None)
        seeds: Root seeds shared by every value
        out_dir: Output tree; <axis>=<value>/seed-<seed>/ per cell

    Returns:
        (per-report DataFrame, side-by-side summary DataFrame)

    Raises:
        ValueError on an empty value or seed list
    """
    axis = AblationAxis(axis)
    values = list(DEFAULT_VALUES[axis] if values is None else values)
    if not values:
        raise ValueError(f"Ablation axis {axis.value} has no values")
    seeds = list(seeds)
    if not seeds:
        raise ValueError("Ablation needs at least one seed")
    values = parse_values(axis, values)
    out_dir = Path(out_dir or config.output_dir)
    manifest = manifest or load_manifest(config)

    rows = []
    for value in values:
        for seed in seeds:
            cell = setting_config(config, axis, value, seed)
            cell_dir = out_dir / f"{axis.value}={value}" / f"seed-{seed}"
            if callback:
                callback("start", f"Ablation {axis.value}={value}, seed {seed}")
            for report in run_cross_manipulation(cell, manifest=manifest, out_dir=cell_dir, callback=callback):
                rows.append({"axis": axis.value, "value": str(value), "seed": seed,
                             "combination": report.combination,
                             **{m: getattr(report, m) for m in METRICS}})

    frame = pd.DataFrame(rows)
    summary = summarize(frame, [str(v) for v in values])
    out_dir.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out_dir / "ablation.csv", index=False)
    summary.to_csv(out_dir / "ablation_summary.csv")
    (out_dir / "ablation_summary.txt").write_text(summary.to_string(float_format=lambda x: f"{x:.4f}") + "\n")
    logger.info("Ablation %s:\n%s", axis.value, summary.to_string(float_format=lambda x: f"{x:.4f}"))
    return frame, summary


def summarize(frame, order):
    """
    Unknown AUROC per combination (rows) and axis value (columns), averaged
    over seeds, plus a mean row and a mean row for every other metric.
    """
    table = frame.pivot_table(index="combination", columns="value", values="unknown_auroc", aggfunc="mean")
    table = table.reindex(columns=order)
    table.loc["mean unknown_auroc"] = table.mean(axis=0)
    for metric in METRICS[1:]:
        table.loc[f"mean {metric}"] = frame.groupby("value")[metric].mean().reindex(order)
    table.columns.name = frame["axis"].iloc[0] if len(frame) else None
    return table
