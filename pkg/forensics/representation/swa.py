"""
Stochastic weight averaging of encoder snapshots.
"""
import copy
import logging
from dataclasses import dataclass, field

import torch
from torch.optim.swa_utils import update_bn

from forensics.representation.model import to_tensor

logger = logging.getLogger(__name__)


@dataclass
class EncoderSnapshot:
    epoch: int
    state: dict


@dataclass
class CheckpointSet:
    """Encoder weight snapshots with epoch tags; all share parameter shapes"""
    snapshots: list = field(default_factory=list)

    def add(self, epoch, encoder_or_state):
        state = encoder_or_state.state_dict() if hasattr(encoder_or_state, "state_dict") else encoder_or_state
        state = {k: v.detach().cpu().clone() for k, v in state.items()}
        if self.snapshots:
            _check_compatible(self.snapshots[0].state, state, epoch)
        self.snapshots.append(EncoderSnapshot(epoch, state))

    @property
    def epochs(self):
        return [s.epoch for s in self.snapshots]

    def __len__(self):
        return len(self.snapshots)


def _check_compatible(reference, state, tag):
    if set(reference) != set(state):
        raise ValueError(f"Snapshot {tag} has parameter names differing from the first snapshot")
    for name, tensor in state.items():
        if tuple(tensor.shape) != tuple(reference[name].shape):
            raise ValueError(f"Snapshot {tag}: parameter {name} has shape {tuple(tensor.shape)}, "
                             f"expected {tuple(reference[name].shape)}")


def swa_average(checkpoints):
    """
    Elementwise arithmetic mean of every snapshot's parameters and buffers.

    Integer buffers (BatchNorm's num_batches_tracked) are averaged and floored.
    Normalisation statistics still need recompute_norm_statistics afterwards.

    Args:
        checkpoints: CheckpointSet with at least one snapshot

    Returns:
        Averaged state_dict
    """
    snapshots = checkpoints.snapshots if isinstance(checkpoints, CheckpointSet) else list(checkpoints)
    if not snapshots:
        raise ValueError("SWA needs at least one snapshot")
    states = [s.state if isinstance(s, EncoderSnapshot) else s for s in snapshots]
    for i, state in enumerate(states[1:], start=1):
        _check_compatible(states[0], state, i)

    k = len(states)
    averaged = {}
    for name, first in states[0].items():
        mean = sum((s[name].double() for s in states), torch.zeros_like(first, dtype=torch.float64)) / k
        averaged[name] = mean.floor().to(first.dtype) if not first.is_floating_point() else mean.to(first.dtype)
    return averaged


def recompute_norm_statistics(encoder, images, batch_size=128):
    """
    One pass over the training images to re-estimate BatchNorm running stats.
    """
    tensor = to_tensor(images)
    loader = [tensor[i:i + batch_size] for i in range(0, len(tensor), batch_size)]
    update_bn(loader, encoder)
    encoder.eval()
    return encoder


def build_swa_encoder(template_encoder, checkpoints, train_images, batch_size=128):
    """Copy of template_encoder carrying the averaged weights and fresh norm statistics"""
    encoder = copy.deepcopy(template_encoder)
    encoder.load_state_dict(swa_average(checkpoints))
    with torch.no_grad():
        recompute_norm_statistics(encoder, train_images, batch_size)
    logger.info("SWA encoder built from %d snapshots (epochs %s)", len(checkpoints), checkpoints.epochs)
    return encoder
