"""
Open-set evaluation protocols.

    cross-manipulation  each forgery method in turn is held out as the unknown class
    cross-family        train on one family of methods, the other family is unknown
    cross-dataset       train on every class of one dataset, every forgery of another is unknown

Every combination trains on known classes only, calibrates thresholds on the
known training samples, then scores the known + unknown test samples. Each
run writes report.json, scores.csv and thresholds.json into its own directory.
"""
import dataclasses
import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

import numpy as np

from forensics import settings
from forensics.config import config_hash, save_config
from forensics.data.datamodel import leave_one_out_combinations
from forensics.data.framedir import load_framedir
from forensics.data.splits import filter_methods, make_protocol_splits
from forensics.errors import ProtocolError
from forensics.evaluation.metrics import (
    ScoreDump, known_class_auroc, open_set_alphabet, tosc, tosc_deepfake_merged, unknown_detection_scores,
)
from forensics.openset.thresholds import (
    class_indices, classify_from_probs, estimate_thresholds, index_to_labels, model_probs,
    thresholds_from_scores,
)
from forensics.representation.checkpoints import load_model_stack
from forensics.training.pipeline import train_model

logger = logging.getLogger(__name__)

REPORT_NAME = "report.json"
SCORES_NAME = "scores.csv"
THRESHOLDS_NAME = "thresholds.json"
MIN_KNOWN_FORGERIES = 2


class Protocol(str, Enum):
    CROSS_MANIPULATION = "cross-manipulation"
    CROSS_FAMILY = "cross-family"
    CROSS_DATASET = "cross-dataset"


@dataclass
class EvalReport:
    """Metrics of one protocol combination plus everything needed to regenerate them"""
    protocol: str
    combination: str
    known_classes: list
    unknown_classes: list
    unknown_auroc: float
    inverse_unknown_auroc: float
    known_class_auroc: dict
    tosc: float
    tosc_deepfake_merged: float
    closed_set_accuracy: float
    train_accuracy: float
    lambda_percentile: float
    lambda_sweep: list
    thresholds: dict
    score_dump: str
    config_hash: str
    seed: int
    dataset_seed: int
    started_at: str
    finished_at: str
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
        return path

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls(**json.load(f))

    def recompute(self, report_dir):
        """Unknown AUROC and TOSC re-derived from the score dump stored next to the report"""
        dump_path = Path(report_dir) / self.score_dump
        dump = ScoreDump.load_csv(dump_path)
        return {"unknown_auroc": dump.unknown_auroc(), "tosc": dump.tosc(),
                "tosc_deepfake_merged": dump.tosc_deepfake_merged()}


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def audit_unknown_isolation(unknown_samples, *training_sets):
    """
    Raises:
        ProtocolError if any unknown sample id occurs in a training or
        calibration input
    """
    unknown_ids = {s.sample_id for s in unknown_samples}
    for training in training_sets:
        leaked = unknown_ids & {s.sample_id for s in training}
        if leaked:
            raise ProtocolError(f"{len(leaked)} unknown samples leaked into training/calibration, "
                                f"e.g. {sorted(leaked)[:3]}")


def lambda_sweep_table(train_probs, train_true, test_probs, test_true, is_known, class_names,
                       lambdas, percentile_method=settings.PERCENTILE_METHOD):
    """
    Open-set metrics for every lambda, from stored probabilities.

    Returns:
        list of dicts (lambda, tosc, tosc_deepfake_merged, unknown_rejection_rate,
        known_acceptance_rate, n_rejected)
    """
    is_known = np.asarray(is_known, dtype=bool)
    rows = []
    for lam in lambdas:
        table = thresholds_from_scores(train_probs, train_true, class_names, lam, percentile_method)
        predicted = np.asarray(index_to_labels(classify_from_probs(test_probs, table.vector(class_names)),
                                               class_names))
        rejected = predicted == settings.UNKNOWN
        rows.append({
            "lambda": float(lam),
            "tosc": tosc(test_true, predicted, open_set_alphabet(class_names)),
            "tosc_deepfake_merged": tosc_deepfake_merged(test_true, predicted),
            "unknown_rejection_rate": float(rejected[~is_known].mean()) if (~is_known).any() else float("nan"),
            "known_acceptance_rate": float((~rejected[is_known]).mean()) if is_known.any() else float("nan"),
            "n_rejected": int(rejected.sum()),
        })
    return rows


def evaluate_trained(config, trained, train_samples, test_samples, known_methods, out_dir, protocol,
                     combination, dataset_seed=None, extra=None, known_auroc_samples=None, started_at=None):
    """
    Calibrate thresholds on the training samples and score the test samples.

    Args:
        config: RunConfig
        trained: TrainedModel
        train_samples: Known-class training samples (calibration input)
        test_samples: Known + unknown test samples
        known_methods: Method labels treated as known (REAL included)
        out_dir: Directory for report.json, scores.csv and thresholds.json
        known_auroc_samples: Samples for the per-method known AUROC (defaults
            to the known test samples)

    Returns:
        EvalReport
    """
    started_at = started_at or _now()
    out_dir = Path(out_dir)
    stack = trained.stack
    scheme = config.stage2_scheme
    known_methods = set(known_methods)
    unknown_samples = [s for s in test_samples if s.method_label not in known_methods]
    audit_unknown_isolation(unknown_samples, train_samples)
    if not unknown_samples:
        raise ProtocolError(f"Combination {combination} has no unknown test samples")

    thresholds = estimate_thresholds(stack, train_samples, config.lambda_percentile, scheme,
                                     config.percentile_method)
    thresholds.save(out_dir / THRESHOLDS_NAME)
    dump = unknown_detection_scores(stack, test_samples, known_methods, thresholds, scheme)
    dump_path = dump.save_csv(out_dir / SCORES_NAME)

    train_probs = model_probs(stack, list(train_samples))
    train_true = class_indices(train_samples, scheme, stack.class_names)
    test_probs = dump.frame[[f"p_{name}" for name in stack.class_names]].to_numpy(dtype=np.float64)
    sweep = lambda_sweep_table(train_probs, train_true, test_probs, dump.frame["true_label"].tolist(),
                               dump.is_known, stack.class_names, config.lambda_sweep, config.percentile_method)

    pool = known_auroc_samples if known_auroc_samples is not None else \
        [s for s in test_samples if s.method_label in known_methods]
    known_aurocs = {}
    for method in sorted(known_methods - {settings.REAL}):
        if any(s.method_label == method for s in pool):
            known_aurocs[method] = known_class_auroc(stack, pool, method, config.seed, scheme)

    report = EvalReport(
        protocol=protocol.value if isinstance(protocol, Protocol) else str(protocol),
        combination=combination,
        known_classes=sorted(known_methods),
        unknown_classes=sorted({s.method_label for s in unknown_samples}),
        unknown_auroc=dump.unknown_auroc(),
        inverse_unknown_auroc=dump.inverse_unknown_auroc(),
        known_class_auroc=known_aurocs,
        tosc=dump.tosc(),
        tosc_deepfake_merged=dump.tosc_deepfake_merged(),
        closed_set_accuracy=dump.closed_set_accuracy(),
        train_accuracy=trained.stage2.train_accuracy,
        lambda_percentile=config.lambda_percentile,
        lambda_sweep=sweep,
        thresholds=thresholds.to_dict(),
        score_dump=dump_path.name,
        config_hash=config_hash(config),
        seed=config.seed,
        dataset_seed=dataset_seed if dataset_seed is not None else config.dataset.seed,
        started_at=started_at,
        finished_at=_now(),
        extra=dict(extra or {}),
    )
    report.save(out_dir / REPORT_NAME)
    logger.info("%s %s: unknown AUROC %.4f, TOSC %.4f, merged TOSC %.4f", report.protocol, combination,
                report.unknown_auroc, report.tosc, report.tosc_deepfake_merged)
    return report


def load_manifest(config, root=None):
    dataset = config.dataset
    return load_framedir(root or dataset.root, extra_methods=dataset.extra_methods,
                         expected_side=dataset.image_side)


def protocol_splits(config, manifest, methods=None):
    _, splits = make_protocol_splits(manifest, config.dataset.ratios, config.dataset.frames_per_video_sampled,
                                     seed=config.seed, methods=methods)
    return splits


def _forgery_methods(manifest):
    return [m for m in manifest.methods if m != settings.REAL]


def _run_known_unknown(config, splits, known_methods, unknown_methods, out_dir, protocol, combination,
                       manifest, callback=None, extra=None):
    started_at = _now()
    out_dir = Path(out_dir)
    known_methods = {settings.REAL, *known_methods}
    train = filter_methods(splits.train, known_methods)
    test = filter_methods(splits.test, known_methods | set(unknown_methods))
    audit_unknown_isolation([s for s in test if s.method_label in unknown_methods], train,
                            filter_methods(splits.val, known_methods))
    if callback:
        callback("start", f"{combination}: training on {sorted(known_methods)}")
    trained = train_model(config, train, out_dir / "model", callback)
    return evaluate_trained(config, trained, train, test, known_methods, out_dir, protocol, combination,
                            dataset_seed=manifest.dataset_seed, extra=extra, started_at=started_at)


def run_cross_manipulation(config, manifest=None, out_dir=None, callback=None, methods=None):
    """
    Leave-one-method-out protocol.

    Args:
        config: RunConfig
        manifest: DatasetManifest (loaded from config.dataset.root when omitted)
        out_dir: Output tree; one subdirectory per combination
        methods: Forgery methods to rotate (all forgery methods of the dataset by default)

    Returns:
        list of EvalReport, one per combination

    Raises:
        ProtocolError if a combination would keep fewer than 2 known forgery methods
    """
    manifest = manifest or load_manifest(config)
    methods = list(methods or _forgery_methods(manifest))
    if len(methods) - 1 < MIN_KNOWN_FORGERIES:
        raise ProtocolError(f"Cross-manipulation needs at least {MIN_KNOWN_FORGERIES} known forgery methods "
                            f"per combination; {methods} leaves {len(methods) - 1}")
    out_dir = Path(out_dir or config.output_dir)
    save_config(config, out_dir / "config.yaml")
    splits = protocol_splits(config, manifest, methods)
    reports = []
    for combination in leave_one_out_combinations(methods):
        reports.append(_run_known_unknown(
            config, splits, combination.known_forgeries, [combination.unknown],
            out_dir / combination.name, Protocol.CROSS_MANIPULATION, combination.name, manifest, callback))
        if callback:
            callback("success", f"{combination.name}: unknown AUROC {reports[-1].unknown_auroc:.4f}")
    return reports


def family_of(method, families=settings.FAMILIES):
    for name, members in families.items():
        if method in members:
            return name
    return None


def run_cross_family(config, manifest=None, out_dir=None, callback=None, families=settings.FAMILIES):
    """
    Train once per family and hold out each method of the other families.

    Returns:
        list of EvalReport, one per (training family, unknown method)
    """
    manifest = manifest or load_manifest(config)
    available = set(_forgery_methods(manifest))
    out_dir = Path(out_dir or config.output_dir)
    save_config(config, out_dir / "config.yaml")
    splits = protocol_splits(config, manifest, sorted(available))
    reports = []
    for family, members in families.items():
        known = [m for m in members if m in available]
        unknowns = [m for m in sorted(available) if m not in members and family_of(m, families)]
        if len(known) < MIN_KNOWN_FORGERIES:
            raise ProtocolError(f"Family {family} has {len(known)} methods in the dataset; "
                                f"{MIN_KNOWN_FORGERIES} are needed for training")
        if not unknowns:
            raise ProtocolError(f"No method outside family {family} to hold out")
        known_set = {settings.REAL, *known}
        train = filter_methods(splits.train, known_set)
        family_dir = out_dir / f"train-{family}"
        if callback:
            callback("start", f"Family {family}: training on {sorted(known_set)}")
        trained = train_model(config, train, family_dir / "model", callback)
        for unknown in unknowns:
            name = f"train-{family}_unknown-{unknown}"
            test = filter_methods(splits.test, known_set | {unknown})
            reports.append(evaluate_trained(
                config, trained, train, test, known_set, family_dir / f"unknown-{unknown}",
                Protocol.CROSS_FAMILY, name, dataset_seed=manifest.dataset_seed,
                extra={"training_family": family, "unknown_family": family_of(unknown, families)}))
    return reports


def run_cross_dataset(config, target_root, manifest=None, out_dir=None, callback=None):
    """
    Train on every class of the source dataset; every forgery of the target is unknown.

    Returns:
        list with one EvalReport
    """
    manifest = manifest or load_manifest(config)
    target_manifest = load_manifest(config, target_root)
    if not len(target_manifest):
        raise ProtocolError(f"Target dataset {target_root} holds no frames")
    out_dir = Path(out_dir or config.output_dir)
    save_config(config, out_dir / "config.yaml")
    started_at = _now()

    splits = protocol_splits(config, manifest)
    known_set = {settings.REAL, *_forgery_methods(manifest)}
    train = filter_methods(splits.train, known_set)
    target_splits = protocol_splits(config, target_manifest)
    # target video ids are namespaced apart from source ids;
    # target forgeries sharing a source method name are still unknown here
    test = [dataclasses.replace(s, video_id=f"target-{s.video_id}")
            for s in (*target_splits.train, *target_splits.val, *target_splits.test)]
    target_unknown = sorted({s.method_label for s in test if s.method_label != settings.REAL})

    if callback:
        callback("start", f"Cross-dataset: training on {sorted(known_set)}, target {target_root}")
    trained = train_model(config, train, out_dir / "cross-dataset" / "model", callback)
    report = evaluate_trained(
        config, trained, train, test, {settings.REAL},
        out_dir / "cross-dataset", Protocol.CROSS_DATASET, "cross-dataset",
        dataset_seed=manifest.dataset_seed,
        extra={"target_root": str(target_root), "target_dataset_seed": target_manifest.dataset_seed,
               "target_unknown_methods": target_unknown},
        known_auroc_samples=[], started_at=started_at)
    return [report]


def run_protocol(config, protocol, target_root=None, out_dir=None, callback=None):
    protocol = Protocol(protocol)
    if protocol is Protocol.CROSS_MANIPULATION:
        return run_cross_manipulation(config, out_dir=out_dir, callback=callback)
    if protocol is Protocol.CROSS_FAMILY:
        return run_cross_family(config, out_dir=out_dir, callback=callback)
    if target_root is None:
        raise ProtocolError("The cross-dataset protocol needs a target dataset root")
    return run_cross_dataset(config, target_root, out_dir=out_dir, callback=callback)


RUN_NAME = "run.json"


def train_run(config, out_dir=None, unknown=None, callback=None):
    """
    Train one model on the known classes of the configured dataset.

    Args:
        config: RunConfig
        out_dir: Run directory (config.output_dir by default)
        unknown: Forgery method to leave out of training, or None for all

    Returns:
        TrainedModel; run.json records the known/unknown split
    """
    manifest = load_manifest(config)
    methods = _forgery_methods(manifest)
    if unknown is not None and unknown not in methods:
        raise ProtocolError(f"Unknown method {unknown} is not in the dataset ({methods})")
    known_set = {settings.REAL, *(m for m in methods if m != unknown)}
    out_dir = Path(out_dir or config.output_dir)
    save_config(config, out_dir / "config.yaml")
    splits = protocol_splits(config, manifest)
    train = filter_methods(splits.train, known_set)
    trained = train_model(config, train, out_dir / "model", callback)
    with open(out_dir / RUN_NAME, "w") as f:
        json.dump({"known_classes": sorted(known_set), "unknown": unknown,
                   "config_hash": config_hash(config), "seed": config.seed,
                   "dataset_seed": manifest.dataset_seed}, f, indent=2)
    return trained


def read_run(run_dir):
    run_dir = Path(run_dir)
    path = run_dir / RUN_NAME
    if not path.exists():
        raise ProtocolError(f"{run_dir} is not a training run directory (no {RUN_NAME})")
    with open(path) as f:
        return json.load(f)


def run_training_samples(config, run_dir):
    """Rebuild the exact training samples of a stored run"""
    run = read_run(run_dir)
    splits = protocol_splits(config, load_manifest(config))
    return filter_methods(splits.train, set(run["known_classes"])), run


def calibrate_run(config, run_dir, lambda_percentile=None):
    """
    Re-estimate the thresholds of a stored run; weights are only read.

    Returns:
        ThresholdTable, also written to run_dir/thresholds.json
    """
    run_dir = Path(run_dir)
    lam = config.lambda_percentile if lambda_percentile is None else float(lambda_percentile)
    stack, _ = load_model_stack(run_dir / "model" / "model")
    train, _ = run_training_samples(config, run_dir)
    table = estimate_thresholds(stack, train, lam, config.stage2_scheme, config.percentile_method)
    table.save(run_dir / THRESHOLDS_NAME)
    return table
