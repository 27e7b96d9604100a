"""
Stage-1 representation losses.

    supcon_loss           supervised contrastive loss, mean over anchors
    weighted_supcon_loss  real anchors weighted by alpha, fake anchors by 1,
                          normalised by the total weight
    simclr_loss           NT-Xent: the sibling view is the only positive
    cross_entropy_loss    mean negative log softmax of the true class

For anchor i with candidates A(i) (every other view) and positives P(i)
(other views sharing i's label):

    l_i = -1/|P(i)| * sum_{p in P(i)} log( exp(z_i.z_p/t) / sum_{a in A(i)} exp(z_i.z_a/t) )

At alpha == 1 the weighted loss is exactly the plain supervised loss.
"""
from dataclasses import dataclass
from enum import Enum

import torch
import torch.nn.functional as F

from forensics import settings


class LossVariant(str, Enum):
    WEIGHTED_SUPCON = "WEIGHTED_SUPCON"
    SUPCON = "SUPCON"
    SIMCLR = "SIMCLR"
    CROSS_ENTROPY = "CROSS_ENTROPY"


@dataclass(frozen=True)
class LossConfig:
    temperature: float = settings.TEMPERATURE
    alpha: float = settings.ALPHA
    variant: LossVariant = LossVariant.WEIGHTED_SUPCON

    def __post_init__(self):
        object.__setattr__(self, "variant", LossVariant(self.variant))
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")


def _as_labels(labels, device):
    return torch.as_tensor(labels, device=device).reshape(-1)


def per_anchor_supcon(z, labels, temperature):
    """
    Supervised contrastive term of every anchor.

    Raises:
        ValueError naming the first anchor without a positive
    """
    if z.ndim != 2:
        raise ValueError(f"Expected z of shape (2N, D), got {tuple(z.shape)}")
    n = z.shape[0]
    labels = _as_labels(labels, z.device)
    if labels.shape[0] != n:
        raise ValueError(f"{labels.shape[0]} labels for {n} vectors")

    self_mask = torch.eye(n, dtype=torch.bool, device=z.device)
    positives = (labels[:, None] == labels[None, :]) & ~self_mask
    n_pos = positives.sum(dim=1)
    if bool((n_pos == 0).any()):
        index = int(torch.nonzero(n_pos == 0)[0, 0])
        raise ValueError(f"Anchor {index} (label {int(labels[index])}) has no positive in the batch")

    logits = (z @ z.T) / temperature
    logits = logits.masked_fill(self_mask, float("-inf"))
    log_prob = logits - torch.logsumexp(logits, dim=1, keepdim=True)
    log_prob = log_prob.masked_fill(~positives, 0.0)
    return -log_prob.sum(dim=1) / n_pos.to(z.dtype)


def supcon_loss(z, labels, temperature=settings.TEMPERATURE):
    """
    Args:
        z: (2N, D) projections, unit rows
        labels: length-2N integer labels; every anchor needs a positive
        temperature: tau > 0

    Returns:
        Scalar tensor
    """
    return per_anchor_supcon(z, labels, temperature).mean()


def weighted_supcon_loss(z, labels, is_real, temperature=settings.TEMPERATURE, alpha=settings.ALPHA):
    """
    Supervised contrastive loss with real anchors weighted by alpha.

    Args:
        z: (2N, D) projections
        labels: length-2N integer labels
        is_real: length-2N booleans
        temperature: tau > 0
        alpha: weight of real anchors, > 0

    Returns:
        sum_i w_i l_i / sum_i w_i
    """
    per_anchor = per_anchor_supcon(z, labels, temperature)
    is_real = torch.as_tensor(is_real, dtype=torch.bool, device=z.device).reshape(-1)
    weights = torch.where(is_real, torch.full_like(per_anchor, float(alpha)), torch.ones_like(per_anchor))
    return (weights * per_anchor).sum() / weights.sum()


def simclr_loss(z, origin_index, temperature=settings.TEMPERATURE):
    """
    NT-Xent loss; each view's only positive is its sibling.

    Raises:
        ValueError if any origin does not have exactly two views
    """
    origin = _as_labels(origin_index, z.device)
    _, counts = torch.unique(origin, return_counts=True)
    if bool((counts != 2).any()):
        raise ValueError("Every origin index must appear exactly twice (unpaired view in batch)")
    return supcon_loss(z, origin, temperature)


def cross_entropy_loss(logits, labels):
    """Mean negative log softmax probability of the true class"""
    labels = _as_labels(labels, logits.device).long()
    k = logits.shape[1]
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= k):
        raise ValueError(f"Labels must lie in [0, {k}), got range [{int(labels.min())}, {int(labels.max())}]")
    return F.cross_entropy(logits, labels)


def stage1_loss(config, z, labels, is_real, origin_index, logits=None):
    """Dispatch on the configured Stage-1 variant"""
    if config.variant is LossVariant.WEIGHTED_SUPCON:
        return weighted_supcon_loss(z, labels, is_real, config.temperature, config.alpha)
    if config.variant is LossVariant.SUPCON:
        return supcon_loss(z, labels, config.temperature)
    if config.variant is LossVariant.SIMCLR:
        return simclr_loss(z, origin_index, config.temperature)
    if logits is None:
        raise ValueError("The cross-entropy variant needs classifier logits")
    return cross_entropy_loss(logits, labels)
