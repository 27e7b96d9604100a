"""
Checkpoint files: an .npz container of named little-endian tensors plus a
JSON sidecar with the metadata (epoch, seed, config hash, shapes).
"""
import json
from pathlib import Path

import numpy as np
import torch

from forensics.representation.model import ModelStack


def _sidecar(path):
    return Path(path).with_suffix(".json")


def save_checkpoint(path, state_dict, metadata=None):
    """
    Write a state_dict as float32 (integer buffers keep int64) little-endian arrays.

    Returns:
        Path of the .npz file
    """
    path = Path(path).with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    shapes = {}
    for name, tensor in state_dict.items():
        array = tensor.detach().cpu().numpy()
        dtype = "<i8" if np.issubdtype(array.dtype, np.integer) else "<f4"
        arrays[name] = array.astype(dtype)
        shapes[name] = list(array.shape)
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    meta = dict(metadata or {})
    meta["parameters"] = shapes
    with open(_sidecar(path), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    return path


def load_checkpoint(path):
    """
    Returns:
        (state_dict of torch tensors, metadata dict)
    """
    path = Path(path).with_suffix(".npz")
    with np.load(path) as data:
        state = {name: torch.from_numpy(np.array(data[name])) for name in data.files}
    metadata = {}
    if _sidecar(path).exists():
        with open(_sidecar(path)) as f:
            metadata = json.load(f)
    return state, metadata


def save_model_stack(path, stack, metadata=None):
    meta = dict(metadata or {})
    meta.update({
        "backbone": stack.backbone,
        "class_names": list(stack.class_names),
        "num_classes": stack.num_classes,
        "projection_bias": stack.projection.linear.bias is not None,
        "embedding_dim": stack.embedding_dim,
    })
    return save_checkpoint(path, stack.state_dict(), meta)


def load_model_stack(path):
    """Rebuild a ModelStack saved by save_model_stack"""
    state, meta = load_checkpoint(path)
    stack = ModelStack(backbone=meta["backbone"], num_classes=meta.get("num_classes", 0),
                       class_names=tuple(meta.get("class_names", ())),
                       projection_bias=meta.get("projection_bias", False),
                       embedding_dim=meta.get("embedding_dim", 128))
    stack.load_state_dict(state)
    stack.eval()
    return stack, meta
