"""
Test cases for video-grouped protocol splits.
"""
import pytest

from conftest import TINY_FRAMES
from forensics import settings
from forensics.data.splits import (filter_methods, make_protocol_splits, partition_counts, subsample,
                                   video_group)
from forensics.errors import DatasetError


def test_videos_never_cross_splits(tiny_benchmark):
    """A pristine video and its forgeries stay in one split"""
    spec, splits = make_protocol_splits(tiny_benchmark, seed=1)
    assert (len(spec.train_videos), len(spec.val_videos), len(spec.test_videos)) == (3, 1, 1)
    for name, videos in (("train", spec.train_videos), ("val", spec.val_videos), ("test", spec.test_videos)):
        assert {s.video_id for s in splits.of(name)} == set(videos)
    total = len(splits.train) + len(splits.val) + len(splits.test)
    assert total == len(tiny_benchmark)


def test_frames_are_sampled_per_video(tiny_benchmark):
    _, splits = make_protocol_splits(tiny_benchmark, frames_per_video_sampled=2, seed=1)
    per_video = {}
    for s in splits.train:
        per_video[(s.video_id, s.method_label)] = per_video.get((s.video_id, s.method_label), 0) + 1
    assert set(per_video.values()) == {2}
    _, capped = make_protocol_splits(tiny_benchmark, frames_per_video_sampled=99, seed=1)
    assert len(capped.test) == 5 * TINY_FRAMES


def test_splits_are_seeded(tiny_benchmark):
    spec_a, _ = make_protocol_splits(tiny_benchmark, seed=4)
    spec_b, _ = make_protocol_splits(tiny_benchmark, seed=4)
    assert spec_a == spec_b


def test_method_restriction_keeps_real(tiny_benchmark):
    _, splits = make_protocol_splits(tiny_benchmark, seed=0, methods=("M1",))
    assert {s.method_label for s in splits.train} == {settings.REAL, "M1"}
    assert filter_methods(splits.train, {"M1"}) == tuple(s for s in splits.train if s.method_label == "M1")


def test_split_validation(tiny_benchmark):
    with pytest.raises(DatasetError):
        make_protocol_splits(tiny_benchmark, ratios=(0.5, 0.5, 0.5))
    with pytest.raises(DatasetError):
        make_protocol_splits(tiny_benchmark, frames_per_video_sampled=0)
    with pytest.raises(DatasetError):
        partition_counts(2, (0.6, 0.2, 0.2))


def test_video_group_matches_source_video():
    assert video_group("000_003") == "000"
    assert video_group("017") == "017"


def test_subsample():
    items = tuple(range(20))
    picked = subsample(items, 3, 5)
    assert len(picked) == 5
    assert list(picked) == sorted(picked)
    assert subsample(items, 3, 5) == picked
    assert subsample(items, 3, None) == items
