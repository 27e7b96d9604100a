"""
Test cases for ablation runs and their summaries.
"""
import dataclasses

import pandas as pd
import pytest

from forensics.config import DatasetConfig, RunConfig
from forensics.data.datamodel import LabelScheme
from forensics.data.synthetic import generate_synthetic_benchmark
from forensics.evaluation.ablation import AblationAxis, parse_values, run_ablation, setting_config, summarize
from forensics.representation.losses import LossVariant


def test_empty_axis_or_seed_list_is_rejected(tiny_config):
    with pytest.raises(ValueError, match="no values"):
        run_ablation(tiny_config, AblationAxis.ALPHA, values=[])
    with pytest.raises(ValueError, match="seed"):
        run_ablation(tiny_config, AblationAxis.ALPHA, values=[1.0], seeds=[])


def test_parse_values():
    assert parse_values("alpha", ["1", "1.21"]) == [1.0, 1.21]
    assert parse_values("repr-method", ["simclr"]) == ["SIMCLR"]
    assert parse_values("scheme-stage1", ["binary"]) == ["BINARY"]
    with pytest.raises(ValueError):
        parse_values("scheme-stage3", ["ternary"])
    with pytest.raises(ValueError):
        parse_values("depth", ["1"])


def test_each_axis_changes_only_its_setting(tiny_config):
    alpha = setting_config(tiny_config, AblationAxis.ALPHA, 2.25, seed=4)
    assert alpha.loss.alpha == 2.25 and alpha.seed == 4
    assert alpha.stage1_scheme is tiny_config.stage1_scheme
    stage1 = setting_config(tiny_config, AblationAxis.SCHEME_STAGE1, "BINARY", seed=0)
    assert stage1.stage1_scheme is LabelScheme.BINARY
    assert stage1.stage2_scheme is tiny_config.stage2_scheme
    stage3 = setting_config(tiny_config, AblationAxis.SCHEME_STAGE3, "BINARY", seed=0)
    assert stage3.stage2_scheme is LabelScheme.BINARY
    assert stage3.stage1_scheme is tiny_config.stage1_scheme
    method = setting_config(tiny_config, AblationAxis.REPR_METHOD, "SIMCLR", seed=0)
    assert method.loss.variant is LossVariant.SIMCLR
    assert method.loss.alpha == tiny_config.loss.alpha


def test_summary_puts_values_side_by_side():
    rows = []
    for value, base in (("1.0", 0.6), ("1.21", 0.7)):
        for seed in (0, 1):
            for combination in ("unknown-M1", "unknown-M2"):
                rows.append({"axis": "alpha", "value": value, "seed": seed, "combination": combination,
                             "unknown_auroc": base + 0.1 * seed, "tosc": 0.5, "tosc_deepfake_merged": 0.9,
                             "closed_set_accuracy": 0.95})
    summary = summarize(pd.DataFrame(rows), ["1.0", "1.21"])
    assert list(summary.columns) == ["1.0", "1.21"]
    assert summary.columns.name == "alpha"
    assert summary.loc["unknown-M1", "1.0"] == pytest.approx(0.65)
    assert summary.loc["mean unknown_auroc", "1.21"] == pytest.approx(0.75)
    assert summary.loc["mean tosc", "1.0"] == pytest.approx(0.5)


@pytest.mark.slow
def test_alpha_ablation_writes_its_tables(tiny_config, tiny_benchmark, tmp_path):
    config = dataclasses.replace(tiny_config, stage1_epochs=1, stage2_epochs=1)
    frame, summary = run_ablation(config, AblationAxis.ALPHA, [1.0, 1.21], seeds=[0], out_dir=tmp_path,
                                  manifest=tiny_benchmark)
    assert len(frame) == 2 * 4
    assert list(summary.columns) == ["1.0", "1.21"]
    for name in ("ablation.csv", "ablation_summary.csv", "ablation_summary.txt"):
        assert (tmp_path / name).exists()


@pytest.fixture(scope="module")
def ablation_setup(tmp_path_factory):
    """Desk-scale benchmark and a shortened default config"""
    root = tmp_path_factory.mktemp("ablation")
    manifest = generate_synthetic_benchmark(0, 20, 6, root / "data", workers=4)
    config = RunConfig(dataset=DatasetConfig(root=str(manifest.root), n_videos=20, frames_per_video=6,
                                             frames_per_video_sampled=6),
                       stage1_epochs=12, stage2_epochs=10, output_dir=str(root / "runs"))
    return config, manifest, root


def _mean_unknown_auroc(setup, axis, values):
    config, manifest, root = setup
    _, summary = run_ablation(config, axis, values, seeds=(0, 1, 2), out_dir=root / axis.value,
                              manifest=manifest)
    return summary.loc["mean unknown_auroc"]


@pytest.mark.slow
@pytest.mark.parametrize("axis", [AblationAxis.SCHEME_STAGE1, AblationAxis.SCHEME_STAGE3])
def test_forgery_specific_labels_detect_unknowns_at_least_as_well(ablation_setup, axis):
    means = _mean_unknown_auroc(ablation_setup, axis, ["FORGERY_SPECIFIC", "BINARY"])
    assert means["FORGERY_SPECIFIC"] >= means["BINARY"], means.to_dict()


@pytest.mark.slow
def test_upweighting_real_anchors_does_not_hurt(ablation_setup):
    means = _mean_unknown_auroc(ablation_setup, AblationAxis.ALPHA, [1.0, 1.21, 2.25])
    assert max(means["1.21"], means["2.25"]) >= means["1.0"], means.to_dict()
