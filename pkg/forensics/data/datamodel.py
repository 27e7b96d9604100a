"""
Core data types shared by the dataset, training and evaluation code.

A Sample carries its labels at both granularities (method and real/fake), so
switching between the forgery-specific and binary label schemes is a
relabeling rather than a re-ingestion.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from forensics import settings
from forensics.data.augment import apply
from forensics.seeding import derive_seed


class LabelScheme(str, Enum):
    """Scheme 1 (forgery-specific) or Scheme 2 (real vs fake) labels"""
    FORGERY_SPECIFIC = "FORGERY_SPECIFIC"
    BINARY = "BINARY"

    def relabel(self, method_label):
        if self is LabelScheme.BINARY and method_label != settings.REAL:
            return settings.FAKE
        return method_label

    def class_names(self, method_labels):
        """Ordered class alphabet for a collection of method labels, REAL first"""
        names = {self.relabel(m) for m in method_labels}
        ordered = sorted(names - {settings.REAL})
        return tuple([settings.REAL] + ordered) if settings.REAL in names else tuple(ordered)


def _frozen_copy(array, dtype):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Sample:
    """One face frame with its identity and labels"""
    image: np.ndarray
    video_id: str
    frame_idx: int
    method_label: str
    is_real: bool

    def __post_init__(self):
        image = _frozen_copy(self.image, np.float32)
        if image.ndim != 3 or image.shape[2] != 3:
            raise ValueError(f"Sample image must be HxWx3, got shape {image.shape}")
        if image.shape[0] != image.shape[1]:
            raise ValueError(f"Sample image must be square, got {image.shape[0]}x{image.shape[1]}")
        if image.size and (image.min() < 0.0 or image.max() > 1.0):
            raise ValueError(f"Pixel values of {self.video_id}/{self.frame_idx} outside [0, 1]")
        if self.frame_idx < 0:
            raise ValueError(f"frame_idx must be >= 0, got {self.frame_idx}")
        if bool(self.is_real) != (self.method_label == settings.REAL):
            raise ValueError(
                f"is_real={self.is_real} inconsistent with method_label={self.method_label}")
        object.__setattr__(self, "image", image)
        object.__setattr__(self, "is_real", bool(self.is_real))

    @property
    def side(self):
        return self.image.shape[0]

    @property
    def sample_id(self):
        return f"{self.method_label}/{self.video_id}/{self.frame_idx}"

    def label(self, scheme):
        return scheme.relabel(self.method_label)


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint train/val/test video id sets"""
    train_videos: frozenset
    val_videos: frozenset
    test_videos: frozenset

    def __post_init__(self):
        for name in ("train_videos", "val_videos", "test_videos"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        overlap = ((self.train_videos & self.val_videos)
                   | (self.train_videos & self.test_videos)
                   | (self.val_videos & self.test_videos))
        if overlap:
            raise ValueError(f"Video ids shared between splits: {sorted(overlap)[:5]}")


@dataclass(frozen=True, eq=False)
class MultiViewBatch:
    """2N augmented views; views 2k-1 and 2k come from sample k"""
    views: np.ndarray
    labels: np.ndarray
    is_real: np.ndarray
    origin_index: np.ndarray
    class_names: tuple = ()

    def __post_init__(self):
        n_views = len(self.views)
        if n_views % 2:
            raise ValueError(f"A multi-view batch needs an even number of views, got {n_views}")
        for name in ("labels", "is_real", "origin_index"):
            if len(getattr(self, name)) != n_views:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n_views}")
        if not (np.array_equal(self.labels[0::2], self.labels[1::2])
                and np.array_equal(self.origin_index[0::2], self.origin_index[1::2])):
            raise ValueError("Paired views must share labels and origin")

    def __len__(self):
        return len(self.views)


@dataclass(frozen=True)
class ProtocolCombination:
    """Known classes (REAL always included) and the held-out unknown method"""
    known: frozenset
    unknown: str

    @property
    def name(self):
        return f"unknown-{self.unknown}"

    @property
    def known_forgeries(self):
        return tuple(sorted(self.known - {settings.REAL}))


def build_multiview_batch(samples, augmenter, scheme, seed, class_names=None, workers=1):
    """
    Build a multi-viewed batch with two augmentations per sample.

    Args:
        samples: Non-empty list of Sample
        augmenter: AugmentPolicy applied independently to each view
        scheme: LabelScheme used to turn method labels into integer labels
        seed: Integer seed; view v of sample k uses derive_seed(seed, k, v)
        class_names: Class alphabet for integer labels (derived from the
            samples when omitted)
        workers: Threads used for augmentation; output order is fixed

    Returns:
        MultiViewBatch with 2*len(samples) views
    """
    if not samples:
        raise ValueError("Cannot build a multi-view batch from an empty sample list")
    shapes = {s.image.shape for s in samples}
    if len(shapes) > 1:
        raise ValueError(f"All images in a batch must share one shape, got {sorted(shapes)}")

    if class_names is None:
        class_names = scheme.class_names(s.method_label for s in samples)
    index = {name: i for i, name in enumerate(class_names)}
    try:
        sample_labels = [index[s.label(scheme)] for s in samples]
    except KeyError as exc:
        raise ValueError(f"Label {exc.args[0]} not in class alphabet {class_names}") from None

    jobs = [(s.image, derive_seed(seed, k, v)) for k, s in enumerate(samples) for v in (0, 1)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            views = list(pool.map(lambda job: apply(augmenter, *job), jobs))
    else:
        views = [apply(augmenter, image, view_seed) for image, view_seed in jobs]

    return MultiViewBatch(
        views=np.stack(views).astype(np.float32),
        labels=np.repeat(np.asarray(sample_labels, dtype=np.int64), 2),
        is_real=np.repeat(np.asarray([s.is_real for s in samples], dtype=bool), 2),
        origin_index=np.repeat(np.arange(1, len(samples) + 1, dtype=np.int64), 2),
        class_names=tuple(class_names),
    )


def leave_one_out_combinations(methods):
    """
    Enumerate the cross-manipulation protocol: each method in turn is unknown.

    Args:
        methods: Forgery method labels (REAL excluded)

    Returns:
        List of ProtocolCombination, one per method, in input order
    """
    methods = list(methods)
    if settings.REAL in methods:
        raise ValueError("REAL is always known and cannot be rotated into the unknown slot")
    if len(set(methods)) != len(methods):
        raise ValueError(f"Duplicate method labels in {methods}")
    if len(methods) < 2:
        raise ValueError(f"Leave-one-out needs at least 2 forgery methods, got {methods}")
    return [
        ProtocolCombination(known=frozenset(set(methods) - {m}) | {settings.REAL}, unknown=m)
        for m in methods
    ]
