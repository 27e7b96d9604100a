"""
Test cases for the open-set evaluation protocols.
"""
import dataclasses
import json

import numpy as np
import pandas as pd
import pytest

from conftest import make_sample
from forensics import settings
from forensics.config import DatasetConfig, RunConfig, load_config
from forensics.data.synthetic import generate_synthetic_benchmark
from forensics.errors import ProtocolError
from forensics.evaluation.protocol import (REPORT_NAME, SCORES_NAME, THRESHOLDS_NAME, EvalReport, Protocol,
                                           audit_unknown_isolation, calibrate_run, family_of,
                                           lambda_sweep_table, read_run, run_cross_dataset,
                                           run_cross_family, run_cross_manipulation, run_protocol, train_run)
from forensics.openset.thresholds import ThresholdTable
from forensics.representation.losses import LossVariant


def _quick(config):
    return dataclasses.replace(config, stage1_epochs=1, stage2_epochs=1)


def test_audit_rejects_leaked_unknown_samples():
    unknown = [make_sample("M4", "000", 1)]
    audit_unknown_isolation(unknown, [make_sample("M4", "001", 1)], [make_sample("REAL", "000", 1)])
    with pytest.raises(ProtocolError, match="leaked"):
        audit_unknown_isolation(unknown, [make_sample("REAL")], [make_sample("M4", "000", 1)])


def test_lambda_sweep_rejects_more_as_lambda_grows():
    r = np.random.default_rng(0)
    train_probs = r.dirichlet(np.ones(3), size=60)
    train_true = train_probs.argmax(axis=1)
    test_probs = r.dirichlet(np.ones(3), size=40)
    names = ("REAL", "M1", "M2")
    is_known = np.arange(40) < 30
    test_true = [names[i] if k else settings.UNKNOWN for i, k in zip(test_probs.argmax(axis=1), is_known)]
    rows = lambda_sweep_table(train_probs, train_true, test_probs, test_true, is_known, names,
                              settings.LAMBDA_SWEEP)
    assert [row["lambda"] for row in rows] == list(settings.LAMBDA_SWEEP)
    rejected = [row["n_rejected"] for row in rows]
    assert rejected == sorted(rejected)
    assert all(0.0 <= row["tosc"] <= 1.0 for row in rows)


def test_lambda_sweep_tallies_every_known_class():
    names = ("REAL", "M1", "M2")
    train_probs = np.array([[0.9, 0.05, 0.05], [0.05, 0.9, 0.05], [0.05, 0.05, 0.9]])
    test_probs = np.array([[0.95, 0.025, 0.025], [0.92, 0.04, 0.04]])
    (row,) = lambda_sweep_table(train_probs, [0, 1, 2], test_probs, ["REAL", settings.UNKNOWN],
                                [True, False], names, (0.0,))
    # M1 and M2 never occur in this split but still count as true negatives
    assert row["tosc"] == pytest.approx(6 / 8)
    assert row["n_rejected"] == 0


def test_cross_manipulation_needs_two_known_forgeries(tiny_config, tiny_benchmark, tmp_path):
    with pytest.raises(ProtocolError, match="at least 2"):
        run_cross_manipulation(tiny_config, tiny_benchmark, tmp_path, methods=["M1", "M2"])


@pytest.fixture(scope="module")
def cross_manipulation(tiny_benchmark, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("cross_manipulation")
    dataset = DatasetConfig(root=str(tiny_benchmark.root), seed=7, n_videos=5, frames_per_video=3,
                            frames_per_video_sampled=3, image_side=32)
    config = RunConfig(dataset=dataset, batch_size=8, stage1_epochs=1, stage2_epochs=1,
                       lambda_sweep=(0.0, 50.0), output_dir=str(out_dir), seed=3)
    return out_dir, run_cross_manipulation(config, tiny_benchmark, out_dir, methods=["M1", "M2", "M3"])


def test_cross_manipulation_rotates_every_method(cross_manipulation):
    out_dir, reports = cross_manipulation
    assert [r.combination for r in reports] == ["unknown-M1", "unknown-M2", "unknown-M3"]
    for report in reports:
        assert report.unknown_classes == [report.combination.split("-")[1]]
        assert settings.REAL in report.known_classes
        assert report.unknown_classes[0] not in report.known_classes
        assert 0.0 <= report.unknown_auroc <= 1.0
        assert report.inverse_unknown_auroc == pytest.approx(1.0 - report.unknown_auroc)
        assert set(report.known_class_auroc) == set(report.known_classes) - {settings.REAL}
        assert len(report.lambda_sweep) == 2
    assert load_config(out_dir / "config.yaml").seed == 3


def test_reports_are_traceable_to_their_score_dumps(cross_manipulation):
    out_dir, reports = cross_manipulation
    for report in reports:
        report_dir = out_dir / report.combination
        for name in (REPORT_NAME, SCORES_NAME, THRESHOLDS_NAME):
            assert (report_dir / name).exists()
        loaded = EvalReport.load(report_dir / REPORT_NAME)
        for metric, value in loaded.recompute(report_dir).items():
            assert getattr(loaded, metric) == pytest.approx(value, abs=1e-12)
        table = ThresholdTable.load(report_dir / THRESHOLDS_NAME)
        assert set(table.epsilon) == set(loaded.known_classes)


def test_family_lookup():
    assert family_of("M1") == "global-signal"
    assert family_of("M4") == "local-region"
    assert family_of("M5") is None


def test_cross_family(tiny_config, tiny_benchmark, tmp_path):
    reports = run_cross_family(_quick(tiny_config), tiny_benchmark, tmp_path)
    assert len(reports) == 4
    for report in reports:
        assert report.extra["training_family"] != report.extra["unknown_family"]
        assert family_of(report.unknown_classes[0]) == report.extra["unknown_family"]


def test_cross_dataset(tiny_config, tiny_benchmark, tmp_path):
    target = generate_synthetic_benchmark(99, 5, 2, tmp_path / "target", side=32, methods=("M5",))
    reports = run_cross_dataset(_quick(tiny_config), target.root, tiny_benchmark, tmp_path / "out")
    (report,) = reports
    assert report.known_classes == [settings.REAL]
    assert report.unknown_classes == ["M5"]
    assert report.extra["target_unknown_methods"] == ["M5"]
    with pytest.raises(ProtocolError):
        run_protocol(_quick(tiny_config), Protocol.CROSS_DATASET, target_root=None)


def test_train_then_calibrate_a_stored_run(tiny_config, tmp_path):
    config = _quick(tiny_config)
    train_run(config, tmp_path, unknown="M4")
    run = read_run(tmp_path)
    assert run["unknown"] == "M4"
    assert "M4" not in run["known_classes"]
    weights = (tmp_path / "model" / "model.npz").read_bytes()
    low = calibrate_run(config, tmp_path, 0.0)
    high = calibrate_run(config, tmp_path, 95.0)
    assert all(high.epsilon[c] >= low.epsilon[c] for c in low.epsilon)
    assert (tmp_path / "model" / "model.npz").read_bytes() == weights
    assert json.loads((tmp_path / THRESHOLDS_NAME).read_text())["lambda_percentile"] == 95.0
    with pytest.raises(ProtocolError):
        train_run(config, tmp_path / "other", unknown="M9")
    with pytest.raises(ProtocolError):
        read_run(tmp_path / "missing")


def _numbers(value, path=()):
    """Flatten nested report fields into (path, number) pairs"""
    if isinstance(value, dict):
        return [item for key in sorted(value) for item in _numbers(value[key], path + (key,))]
    if isinstance(value, (list, tuple)):
        return [item for i, v in enumerate(value) for item in _numbers(v, path + (i,))]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [(path, float(value))]
    return []


REPRODUCED_FIELDS = ("unknown_auroc", "inverse_unknown_auroc", "known_class_auroc", "tosc",
                     "tosc_deepfake_merged", "closed_set_accuracy", "train_accuracy", "lambda_sweep",
                     "thresholds")


def test_rerun_reproduces_every_metric(cross_manipulation, tiny_benchmark, tmp_path):
    """Same config and seed into a fresh directory gives the same numbers"""
    out_dir, reports = cross_manipulation
    config = dataclasses.replace(load_config(out_dir / "config.yaml"), output_dir=str(tmp_path))
    rerun = run_cross_manipulation(config, tiny_benchmark, tmp_path, methods=["M1", "M2", "M3"])
    for first, second in zip(reports, rerun):
        assert first.config_hash == second.config_hash
        for name in REPRODUCED_FIELDS:
            a, b = _numbers(getattr(first, name)), _numbers(getattr(second, name))
            assert [p for p, _ in a] == [p for p, _ in b], name
            for (path, x), (_, y) in zip(a, b):
                assert x == pytest.approx(y, abs=1e-3), (first.combination, name, path)


@pytest.fixture(scope="module")
def desk_scale_runs(tmp_path_factory):
    """Default pipeline with the weighted contrastive loss and with plain cross-entropy"""
    root = tmp_path_factory.mktemp("desk_scale")
    manifest = generate_synthetic_benchmark(0, 20, 6, root / "data", workers=4)
    config = RunConfig(dataset=DatasetConfig(root=str(manifest.root), n_videos=20, frames_per_video=6,
                                             frames_per_video_sampled=6),
                       output_dir=str(root / "runs"))
    runs = {}
    for variant in (LossVariant.WEIGHTED_SUPCON, LossVariant.CROSS_ENTROPY):
        out_dir = root / "runs" / variant.value
        run_config = dataclasses.replace(config, loss=dataclasses.replace(config.loss, variant=variant),
                                         output_dir=str(out_dir))
        runs[variant] = out_dir, run_cross_manipulation(run_config, manifest, out_dir)
    return runs


@pytest.mark.slow
def test_weighted_supcon_detects_unknown_forgeries(desk_scale_runs):
    """Minutes on one CPU"""
    _, reports = desk_scale_runs[LossVariant.WEIGHTED_SUPCON]
    assert len(reports) == 4
    assert np.mean([r.unknown_auroc for r in reports]) >= 0.70
    assert np.mean([r.closed_set_accuracy for r in reports]) > 0.90


@pytest.mark.slow
def test_weighted_supcon_beats_cross_entropy_on_unknowns(desk_scale_runs):
    _, contrastive = desk_scale_runs[LossVariant.WEIGHTED_SUPCON]
    _, baseline = desk_scale_runs[LossVariant.CROSS_ENTROPY]
    gain = np.mean([r.unknown_auroc for r in contrastive]) - np.mean([r.unknown_auroc for r in baseline])
    assert gain >= 0.05


@pytest.mark.slow
def test_known_forgeries_separate_from_real(desk_scale_runs):
    _, reports = desk_scale_runs[LossVariant.WEIGHTED_SUPCON]
    for report in reports:
        for method, auroc in report.known_class_auroc.items():
            assert auroc > 0.95, (report.combination, method)


@pytest.mark.slow
def test_stage1_loss_falls_over_the_first_epochs(desk_scale_runs):
    out_dir, reports = desk_scale_runs[LossVariant.WEIGHTED_SUPCON]
    for report in reports:
        log = pd.read_csv(out_dir / report.combination / "model" / "train_log.csv")
        losses = log.loc[log["stage"] == "stage1", "loss_mean"].tolist()[:3]
        assert losses[0] > losses[1] > losses[2], (report.combination, losses)


@pytest.mark.slow
def test_stage2_fits_the_training_set(desk_scale_runs):
    _, reports = desk_scale_runs[LossVariant.WEIGHTED_SUPCON]
    assert all(r.train_accuracy > 0.9 for r in reports)
