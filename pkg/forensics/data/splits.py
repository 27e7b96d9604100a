"""
Video-grouped protocol splits.

A pristine video and all manipulated videos derived from it land in the same
split. Derived videos are matched to their source by the part of the id before
the first underscore, which covers both the synthetic layout (identical ids)
and the FaceForensics++ target_source naming ("000_003" derives from "000").
"""
import logging
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from forensics import settings
from forensics.data.datamodel import Sample, SplitSpec
from forensics.data.framedir import load_image
from forensics.errors import DatasetError
from forensics.seeding import derive_seed, rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProtocolSplits:
    train: tuple
    val: tuple
    test: tuple

    def of(self, name):
        return getattr(self, name)


def video_group(video_id):
    return str(video_id).split("_")[0]


def partition_counts(n_groups, ratios):
    """Number of groups per split; every split gets at least one"""
    n_train = int(round(ratios[0] * n_groups))
    n_val = int(round(ratios[1] * n_groups))
    n_test = n_groups - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise DatasetError(
            f"{n_groups} videos cannot populate train/val/test with ratios {tuple(ratios)} "
            f"(got {n_train}/{n_val}/{n_test})")
    return n_train, n_val, n_test


def make_protocol_splits(manifest, ratios=settings.SPLIT_RATIOS,
                         frames_per_video_sampled=settings.FRAMES_PER_VIDEO_SAMPLED, seed=0,
                         methods=None):
    """
    Partition videos into train/val/test and sample frames per video.

    Args:
        manifest: DatasetManifest
        ratios: (train, val, test) fractions summing to 1
        frames_per_video_sampled: Frames drawn uniformly without replacement
            from each (video, class); fewer if the video has fewer frames
        seed: Integer seed for the partition and the frame draws
        methods: Restrict to these method labels (REAL always kept)

    Returns:
        (SplitSpec, ProtocolSplits) with Sample tuples per split
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise DatasetError(f"Split ratios must be three non-negative fractions summing to 1, got {ratios}")
    if frames_per_video_sampled < 1:
        raise DatasetError(f"frames_per_video_sampled must be >= 1, got {frames_per_video_sampled}")

    rows = [r for r in manifest.rows
            if methods is None or r.method_label == settings.REAL or r.method_label in methods]
    groups = sorted({video_group(r.video_id) for r in rows})
    n_train, n_val, _ = partition_counts(len(groups), ratios)
    order = rng(seed, "partition").permutation(len(groups))
    shuffled = [groups[i] for i in order]
    split_of_group = {}
    for i, group in enumerate(shuffled):
        split_of_group[group] = "train" if i < n_train else "val" if i < n_train + n_val else "test"

    by_video = defaultdict(list)
    for row in rows:
        by_video[(row.video_id, row.method_label)].append(row)

    videos = {"train": set(), "val": set(), "test": set()}
    samples = {"train": [], "val": [], "test": []}
    for (video_id, method), video_rows in sorted(by_video.items()):
        split = split_of_group[video_group(video_id)]
        videos[split].add(video_id)
        video_rows.sort(key=lambda r: r.frame_idx)
        k = min(frames_per_video_sampled, len(video_rows))
        picks = np.sort(rng(seed, "frames", video_id, method).choice(len(video_rows), size=k, replace=False))
        for i in picks:
            row = video_rows[i]
            image = load_image(manifest.path_of(row), manifest.image_side)
            samples[split].append(Sample(image=image, video_id=row.video_id, frame_idx=row.frame_idx,
                                         method_label=row.method_label,
                                         is_real=row.method_label == settings.REAL))

    spec = SplitSpec(train_videos=videos["train"], val_videos=videos["val"], test_videos=videos["test"])
    logger.info("Protocol split (seed %d): %d/%d/%d videos, %d/%d/%d samples", seed,
                len(spec.train_videos), len(spec.val_videos), len(spec.test_videos),
                len(samples["train"]), len(samples["val"]), len(samples["test"]))
    return spec, ProtocolSplits(train=tuple(samples["train"]), val=tuple(samples["val"]),
                                test=tuple(samples["test"]))


def filter_methods(samples, keep):
    """Samples whose method label is in keep"""
    keep = set(keep)
    return tuple(s for s in samples if s.method_label in keep)


def subsample(samples, seed, limit):
    """At most limit samples, drawn without replacement (order preserved)"""
    if limit is None or len(samples) <= limit:
        return tuple(samples)
    picks = np.sort(np.random.default_rng(derive_seed(seed, "subsample")).choice(
        len(samples), size=limit, replace=False))
    return tuple(samples[i] for i in picks)
