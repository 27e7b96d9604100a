"""
Shared pytest fixtures: a tiny synthetic benchmark and a matching run config.
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from forensics import settings  # noqa: E402
from forensics.config import DatasetConfig, RunConfig  # noqa: E402
from forensics.data.datamodel import Sample  # noqa: E402
from forensics.data.synthetic import generate_synthetic_benchmark  # noqa: E402

TINY_SEED = 7
TINY_VIDEOS = 5
TINY_FRAMES = 3
TINY_SIDE = 32


def make_sample(method="REAL", video_id="000", frame_idx=0, side=16, value=None, seed=0):
    """Sample with a random (or constant) image"""
    if value is None:
        image = np.random.default_rng(seed).random((side, side, 3))
    else:
        image = np.full((side, side, 3), value)
    return Sample(image=image, video_id=video_id, frame_idx=frame_idx, method_label=method,
                  is_real=method == settings.REAL)


@pytest.fixture
def sample_factory():
    return make_sample


@pytest.fixture(scope="session")
def tiny_benchmark(tmp_path_factory):
    """5 videos x 3 frames x (REAL + M1..M4) at 32 px"""
    root = tmp_path_factory.mktemp("tiny_benchmark")
    return generate_synthetic_benchmark(TINY_SEED, TINY_VIDEOS, TINY_FRAMES, root, side=TINY_SIDE)


@pytest.fixture
def tiny_config(tiny_benchmark, tmp_path):
    dataset = DatasetConfig(root=str(tiny_benchmark.root), seed=TINY_SEED, n_videos=TINY_VIDEOS,
                            frames_per_video=TINY_FRAMES, frames_per_video_sampled=TINY_FRAMES,
                            image_side=TINY_SIDE)
    return RunConfig(dataset=dataset, batch_size=8, stage1_epochs=2, stage2_epochs=2,
                     lambda_sweep=(0.0, 50.0, 95.0), output_dir=str(tmp_path / "runs"), seed=3)
