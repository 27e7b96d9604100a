"""
Explainability artifacts of a stored run: Grad-CAM overlays with per-class
statistics, and a 2D projection of the test embeddings.

Outputs under <run_dir>/explain/:
    gradcam/<method>_<video>_<frame>.png
    gradcam_samples.csv   one row per explained sample
    gradcam_stats.csv     spatial entropy and face contrast averaged per class
    projection.csv / projection.png
"""
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from forensics import settings
from forensics.data.splits import subsample
from forensics.data.synthetic import frame_geometry
from forensics.evaluation.protocol import load_manifest, protocol_splits, read_run
from forensics.explain.gradcam import face_region_contrast, gradcam, save_overlay, spatial_entropy
from forensics.explain.projection import ProjectionMethod, project_embeddings
from forensics.representation.checkpoints import load_model_stack
from forensics.representation.model import encode, predict_logits, sample_images

logger = logging.getLogger(__name__)


def face_mask_of(manifest, sample):
    """Soft face mask of a generated frame, or None for non-synthetic data"""
    if manifest.metadata.get("generator") != "synthetic" or manifest.dataset_seed is None:
        return None
    return frame_geometry(manifest.dataset_seed, sample.video_id, sample.frame_idx, sample.side).mask(sample.side)


def explain_samples(stack, samples, out_dir, manifest=None, unknown_methods=()):
    """
    Grad-CAM of every sample towards its predicted class.

    Returns:
        (per-sample DataFrame, per-class DataFrame)
    """
    out_dir = Path(out_dir)
    samples = list(samples)
    predicted = predict_logits(stack, sample_images(samples)).argmax(dim=1).numpy() if samples else []
    rows = []
    for sample, index in zip(samples, predicted):
        activation = gradcam(stack, sample.image, int(index), sample.sample_id)
        save_overlay(sample.image, activation,
                     out_dir / "gradcam" / f"{sample.method_label}_{sample.video_id}_{sample.frame_idx}.png")
        mask = face_mask_of(manifest, sample) if manifest is not None else None
        rows.append({
            "sample_id": sample.sample_id,
            "method_label": sample.method_label,
            "is_unknown": sample.method_label in unknown_methods,
            "target_class": activation.target_class,
            "spatial_entropy": spatial_entropy(activation.heatmap),
            "face_contrast": face_region_contrast(activation.heatmap, mask) if mask is not None else np.nan,
        })
    per_sample = pd.DataFrame(rows, columns=["sample_id", "method_label", "is_unknown", "target_class",
                                             "spatial_entropy", "face_contrast"])
    per_class = per_sample.groupby("method_label").agg(
        n=("sample_id", "count"),
        is_unknown=("is_unknown", "first"),
        spatial_entropy=("spatial_entropy", "mean"),
        face_contrast=("face_contrast", "mean"),
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    per_sample.to_csv(out_dir / "gradcam_samples.csv", index=False)
    per_class.to_csv(out_dir / "gradcam_stats.csv")
    return per_sample, per_class


def project_samples(stack, samples, out_dir, method=ProjectionMethod.TSNE_STYLE, seed=0):
    """Embed samples, project to 2D and write projection.csv / projection.png"""
    out_dir = Path(out_dir)
    embeddings = encode(stack, sample_images(samples)).numpy()
    projection = project_embeddings(embeddings, [s.method_label for s in samples], method, seed)
    projection.save_csv(out_dir / "projection.csv")
    projection.save_png(out_dir / "projection.png", title=f"{ProjectionMethod(method).value} of test embeddings")
    return projection


def explain_run(config, run_dir, n_samples=8, method=ProjectionMethod.TSNE_STYLE, callback=None):
    """
    Write Grad-CAM and projection artifacts for a trained run. Weights are only read.

    Args:
        config: RunConfig of the run
        run_dir: Directory written by the train command
        n_samples: Test samples explained per method label
        method: ProjectionMethod

    Returns:
        dict with the per-class Grad-CAM table and the projection silhouette
    """
    run_dir = Path(run_dir)
    run = read_run(run_dir)
    stack, _ = load_model_stack(run_dir / "model" / "model")
    manifest = load_manifest(config)
    splits = protocol_splits(config, manifest)
    unknown = {run["unknown"]} if run.get("unknown") else set()

    chosen = []
    for label in sorted({s.method_label for s in splits.test}):
        pool = [s for s in splits.test if s.method_label == label]
        chosen.extend(subsample(pool, config.seed, n_samples))
    if callback:
        callback("start", f"Explaining {len(chosen)} test samples")

    out_dir = run_dir / "explain"
    _, per_class = explain_samples(stack, chosen, out_dir, manifest, unknown)
    projection_pool = chosen if len(chosen) >= 10 else list(splits.test)
    projection = project_samples(stack, projection_pool, out_dir, method, config.seed)
    silhouette = projection.silhouette() if len(set(projection.labels)) > 1 else float("nan")
    logger.info("Grad-CAM statistics per class:\n%s", per_class.to_string())
    if callback:
        callback("success", f"Explain artifacts written to {out_dir} (silhouette {silhouette:.3f})")
    return {"gradcam_stats": per_class, "silhouette": silhouette,
            "known_classes": run.get("known_classes", [settings.REAL])}
