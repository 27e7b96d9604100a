"""
Counter-style seed derivation and content digests.

Every random stream in a run is derived from one root seed by hashing the
root together with a path of labels, so that changing one stage never
shifts the randomness of another.
"""
import json
import random

import numpy as np
import torch
from Crypto.Hash import SHA256

SEED_BITS = 63


def derive_seed(root_seed, *parts):
    """
    Derive a child seed from a root seed and a sequence of labels.

    Args:
        root_seed: Integer root seed
        *parts: Labels (str/int) identifying the consumer, e.g. ("video", "007")

    Returns:
        Non-negative integer below 2**63
    """
    payload = json.dumps([int(root_seed), *[str(p) for p in parts]]).encode("utf-8")
    digest = SHA256.new(payload).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << SEED_BITS) - 1)


def rng(root_seed, *parts):
    """numpy Generator seeded from derive_seed"""
    return np.random.default_rng(derive_seed(root_seed, *parts))


def torch_generator(root_seed, *parts):
    generator = torch.Generator()
    generator.manual_seed(derive_seed(root_seed, *parts))
    return generator


def seed_everything(seed):
    """Seed python, numpy and torch global generators"""
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)


def sha256_hex(data):
    if isinstance(data, str):
        data = data.encode("utf-8")
    return SHA256.new(data).hexdigest()


def state_digest(module_or_state):
    """
    SHA-256 over every tensor of a module's state_dict (names, shapes, bytes).

    Used to prove that a frozen encoder was not modified.
    """
    state = module_or_state.state_dict() if hasattr(module_or_state, "state_dict") else module_or_state
    h = SHA256.new()
    for name in sorted(state):
        tensor = state[name].detach().cpu().contiguous()
        h.update(name.encode("utf-8"))
        h.update(str(tuple(tensor.shape)).encode("utf-8"))
        h.update(tensor.numpy().tobytes())
    return h.hexdigest()
