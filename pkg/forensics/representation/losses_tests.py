"""
Test cases for the Stage-1 losses.

The vectorised losses are checked against a plain double loop over anchors
and candidates, written directly from the definition.
"""
import math

import pytest
import sympy
import torch
import torch.nn.functional as F
from hypothesis import given, settings as hsettings, strategies as st

from forensics.representation.losses import (LossConfig, LossVariant, cross_entropy_loss, per_anchor_supcon,
                                             simclr_loss, stage1_loss, supcon_loss, weighted_supcon_loss)


def brute_force_supcon(z, labels, is_real, temperature, alpha):
    """Weighted loss with explicit loops; alpha=1 gives the plain loss"""
    z = z.double().tolist()
    n = len(z)

    def dot(a, b):
        return sum(x * y for x, y in zip(a, b))

    total, weight_sum = 0.0, 0.0
    for i in range(n):
        denominator = sum(math.exp(dot(z[i], z[a]) / temperature) for a in range(n) if a != i)
        positives = [p for p in range(n) if p != i and labels[p] == labels[i]]
        term = -sum(math.log(math.exp(dot(z[i], z[p]) / temperature) / denominator)
                    for p in positives) / len(positives)
        w = alpha if is_real[i] else 1.0
        total += w * term
        weight_sum += w
    return total / weight_sum


def _batch(seed, n_pairs=4, dim=8):
    g = torch.Generator().manual_seed(seed)
    z = F.normalize(torch.randn(2 * n_pairs, dim, generator=g, dtype=torch.float64), dim=1)
    labels = [k % 2 for k in range(n_pairs) for _ in (0, 1)]
    is_real = [label == 0 for label in labels]
    origin = [k for k in range(n_pairs) for _ in (0, 1)]
    return z, labels, is_real, origin


@hsettings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.floats(0.25, 4.0), temperature=st.floats(0.05, 1.0))
def test_weighted_supcon_matches_brute_force(seed, alpha, temperature):
    z, labels, is_real, _ = _batch(seed)
    expected = brute_force_supcon(z, labels, is_real, temperature, alpha)
    got = float(weighted_supcon_loss(z, labels, is_real, temperature, alpha))
    assert got == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_alpha_one_equals_plain_supcon():
    z, labels, is_real, _ = _batch(3)
    assert float(weighted_supcon_loss(z, labels, is_real, 0.1, 1.0)) == pytest.approx(
        float(supcon_loss(z, labels, 0.1)), rel=1e-12)


def test_real_weight_shifts_the_loss_towards_real_anchors():
    z, labels, is_real, _ = _batch(5)
    per_anchor = per_anchor_supcon(z, labels, 0.1)
    real_mean = float(per_anchor[torch.tensor(is_real)].mean())
    fake_mean = float(per_anchor[~torch.tensor(is_real)].mean())
    heavy = float(weighted_supcon_loss(z, labels, is_real, 0.1, 1000.0))
    assert abs(heavy - real_mean) < abs(heavy - fake_mean)


def test_two_identical_pairs_give_a_closed_form():
    """Two anchors of the same label at distance 0, two orthogonal ones of another label"""
    z = torch.tensor([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]], dtype=torch.float64)
    t = sympy.Rational(1, 2)
    # each anchor: one positive at similarity 1, two negatives at similarity 0
    expected = -sympy.log(sympy.exp(1 / t) / (sympy.exp(1 / t) + 2))
    got = float(supcon_loss(z, [0, 0, 1, 1], temperature=0.5))
    assert got == pytest.approx(float(expected), rel=1e-12)


def test_anchor_without_positive_is_named():
    z, _, _, _ = _batch(0, n_pairs=2)
    with pytest.raises(ValueError, match="Anchor 2"):
        supcon_loss(z, [0, 0, 1, 2])


def test_simclr_uses_only_sibling_views():
    z, _, _, origin = _batch(1)
    assert float(simclr_loss(z, origin, 0.2)) == pytest.approx(float(supcon_loss(z, origin, 0.2)))
    with pytest.raises(ValueError, match="unpaired"):
        simclr_loss(z, [0, 0, 1, 1, 2, 2, 3, 4], 0.2)


GRADCHECK_LOSSES = {
    "weighted_supcon": lambda v, labels, is_real, origin: weighted_supcon_loss(v, labels, is_real, 0.5, 1.5),
    "supcon": lambda v, labels, is_real, origin: supcon_loss(v, labels, 0.5),
    "simclr": lambda v, labels, is_real, origin: simclr_loss(v, origin, 0.5),
}


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("name", sorted(GRADCHECK_LOSSES))
def test_gradients_match_finite_differences(name, seed):
    z, labels, is_real, origin = _batch(seed, n_pairs=3, dim=4)
    z = z.clone().requires_grad_(True)
    loss = GRADCHECK_LOSSES[name]
    assert torch.autograd.gradcheck(lambda v: loss(v, labels, is_real, origin), (z,), eps=1e-4, rtol=1e-4)


def test_cross_entropy():
    logits = torch.tensor([[2.0, 0.0], [0.0, 2.0]], dtype=torch.float64)
    expected = -math.log(math.exp(2) / (math.exp(2) + 1))
    assert float(cross_entropy_loss(logits, [0, 1])) == pytest.approx(expected)
    with pytest.raises(ValueError):
        cross_entropy_loss(logits, [0, 2])


@pytest.mark.parametrize("k", [2, 3, 5])
def test_uniform_logits_give_log_k(k):
    logits = torch.full((4, k), 0.7, dtype=torch.float64)
    assert float(cross_entropy_loss(logits, [i % k for i in range(4)])) == pytest.approx(math.log(k), rel=1e-12)


def test_stage1_dispatch():
    z, labels, is_real, origin = _batch(2)
    config = LossConfig(temperature=0.1, alpha=2.0, variant="SUPCON")
    assert config.variant is LossVariant.SUPCON
    assert float(stage1_loss(config, z, labels, is_real, origin)) == pytest.approx(
        float(supcon_loss(z, labels, 0.1)))
    with pytest.raises(ValueError):
        stage1_loss(LossConfig(variant=LossVariant.CROSS_ENTROPY), z, labels, is_real, origin)
    with pytest.raises(ValueError):
        LossConfig(temperature=0.0)
    with pytest.raises(ValueError):
        LossConfig(alpha=-1.0)


@hsettings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_loss_ignores_the_order_of_views(seed):
    z, labels, is_real, _ = _batch(seed)
    order = torch.randperm(len(z), generator=torch.Generator().manual_seed(seed))
    permuted = float(weighted_supcon_loss(z[order], [labels[i] for i in order],
                                          [is_real[i] for i in order], 0.1, 1.21))
    assert permuted == pytest.approx(float(weighted_supcon_loss(z, labels, is_real, 0.1, 1.21)), rel=1e-9)


def test_three_class_cross_entropy_matches_exact_arithmetic():
    logits = torch.tensor([[1.0, 2.0, 3.0]], dtype=torch.float64)
    e = [sympy.exp(k) for k in (1, 2, 3)]
    expected = -sympy.log(e[0] / sum(e))
    assert float(cross_entropy_loss(logits, [0])) == pytest.approx(float(expected), rel=1e-12)
