"""
Test cases for stochastic weight averaging.
"""
import numpy as np
import pytest
import torch
import torch.nn as nn

from forensics.representation.model import ConvEncoder
from forensics.representation.swa import CheckpointSet, build_swa_encoder, swa_average


def _state(value, count=0):
    return {"weight": torch.full((2, 2), float(value)), "num_batches_tracked": torch.tensor(count)}


def test_average_is_elementwise_mean():
    checkpoints = CheckpointSet()
    for epoch, value in enumerate((1.0, 2.0, 6.0)):
        checkpoints.add(epoch, _state(value, count=epoch))
    averaged = swa_average(checkpoints)
    assert torch.allclose(averaged["weight"], torch.full((2, 2), 3.0))
    assert averaged["num_batches_tracked"].dtype == torch.int64
    assert int(averaged["num_batches_tracked"]) == 1
    assert checkpoints.epochs == [0, 1, 2]


def test_single_snapshot_is_returned_unchanged():
    checkpoints = CheckpointSet()
    checkpoints.add(0, _state(1.5))
    assert torch.equal(swa_average(checkpoints)["weight"], torch.full((2, 2), 1.5))


def test_snapshots_are_copies():
    layer = nn.Linear(2, 2)
    checkpoints = CheckpointSet()
    checkpoints.add(0, layer)
    with torch.no_grad():
        layer.weight.add_(1.0)
    assert not torch.equal(checkpoints.snapshots[0].state["weight"], layer.weight)


def test_incompatible_snapshots_are_rejected():
    checkpoints = CheckpointSet()
    checkpoints.add(0, _state(1.0))
    with pytest.raises(ValueError, match="shape"):
        checkpoints.add(1, {"weight": torch.zeros(3, 3), "num_batches_tracked": torch.tensor(0)})
    with pytest.raises(ValueError):
        swa_average(CheckpointSet())


def test_swa_encoder_recomputes_norm_statistics():
    torch.manual_seed(0)
    template = ConvEncoder(embedding_dim=16, width=4)
    checkpoints = CheckpointSet()
    for epoch in range(2):
        with torch.no_grad():
            for p in template.parameters():
                p.add_(0.01)
        checkpoints.add(epoch, template)
    images = np.random.default_rng(0).random((6, 16, 16, 3)).astype(np.float32)
    encoder = build_swa_encoder(template, checkpoints, images, batch_size=3)
    assert not encoder.training
    assert encoder is not template
    bn = encoder.features[0][1]
    assert not torch.allclose(bn.running_mean, torch.zeros_like(bn.running_mean))
