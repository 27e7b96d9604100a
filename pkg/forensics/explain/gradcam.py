"""
Grad-CAM over the encoder's final convolutional grid.

The class score is back-propagated to the final grid; channel weights are the
spatially averaged gradients, the map is the rectified weighted channel sum,
bilinearly upsampled to the input size and min-max normalised.
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np
import torch
import torch.nn.functional as F

from forensics.representation.model import to_tensor

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

FLAT_MAP_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class ActivationMap:
    heatmap: np.ndarray
    target_class: str
    sample_id: str = ""
    grid_shape: tuple = ()

    def __post_init__(self):
        heatmap = np.asarray(self.heatmap, dtype=np.float64)
        if heatmap.ndim != 2:
            raise ValueError(f"Heatmap must be 2-D, got shape {heatmap.shape}")
        if not np.all(np.isfinite(heatmap)) or heatmap.min() < 0.0 or heatmap.max() > 1.0:
            raise ValueError("Heatmap values must be finite and lie in [0, 1]")
        object.__setattr__(self, "heatmap", heatmap)


def _target_index(stack, target_class):
    if isinstance(target_class, (int, np.integer)):
        index = int(target_class)
        if not 0 <= index < stack.num_classes:
            raise ValueError(f"Class index {index} outside [0, {stack.num_classes})")
        return index
    if target_class not in stack.class_names:
        raise ValueError(f"Unknown target class {target_class}; classifier knows {stack.class_names}")
    return stack.class_names.index(target_class)


def gradcam(stack, image, target_class, sample_id=""):
    """
    Class activation map of one image.

    Args:
        stack: ModelStack with a classifier head
        image: (H, W, 3) array in [0, 1]
        target_class: Class name or index
        sample_id: Id recorded on the map

    Returns:
        ActivationMap of shape (H, W)

    Raises:
        ValueError if the encoder exposes no convolutional feature grid
    """
    encoder = stack.encoder
    if not (hasattr(encoder, "forward_features") and hasattr(encoder, "embed")):
        raise ValueError(f"{type(encoder).__name__} has no convolutional feature grid to explain")
    if stack.classifier is None:
        raise ValueError("Grad-CAM needs a classifier head")
    index = _target_index(stack, target_class)
    x = to_tensor(np.asarray(image, dtype=np.float32)[None])

    was_training = stack.training
    stack.eval()
    try:
        with torch.enable_grad():
            with torch.no_grad():
                grid = encoder.forward_features(x)
            grid = grid.detach().requires_grad_(True)
            score = stack.classifier(encoder.embed(grid))[0, index]
            (gradients,) = torch.autograd.grad(score, grid)
    finally:
        stack.train(was_training)

    weights = gradients.mean(dim=(2, 3), keepdim=True)
    cam = F.relu((weights * grid.detach()).sum(dim=1, keepdim=True))
    cam = F.interpolate(cam, size=x.shape[-2:], mode="bilinear", align_corners=False)[0, 0]
    cam = cam.double().numpy()
    low, high = cam.min(), cam.max()
    if high - low < FLAT_MAP_EPS:
        heatmap = np.zeros_like(cam)
    else:
        heatmap = np.clip((cam - low) / (high - low), 0.0, 1.0)
    return ActivationMap(heatmap, stack.class_names[index] if stack.class_names else str(index),
                         sample_id, tuple(grid.shape[-2:]))


def spatial_entropy(heatmap):
    """
    Shannon entropy of the heatmap read as a distribution, divided by its
    maximum log(H*W). 1 = perfectly diffuse, 0 = a single pixel. An all-zero
    map counts as diffuse.
    """
    heatmap = np.asarray(heatmap, dtype=np.float64)
    total = heatmap.sum()
    n = heatmap.size
    if n <= 1 or total <= 0:
        return 1.0
    p = heatmap.ravel() / total
    p = p[p > 0]
    return float(-(p * np.log(p)).sum() / np.log(n))


def face_region_contrast(heatmap, face_mask, threshold=0.5):
    """Mean activation inside the face mask minus mean activation outside"""
    heatmap = np.asarray(heatmap, dtype=np.float64)
    inside = np.asarray(face_mask) > threshold
    if inside.shape != heatmap.shape:
        raise ValueError(f"Mask shape {inside.shape} differs from heatmap shape {heatmap.shape}")
    if inside.all() or not inside.any():
        raise ValueError("Face mask must split the image into a non-empty inside and outside")
    return float(heatmap[inside].mean() - heatmap[~inside].mean())


def save_overlay(image, activation, path, alpha=0.45):
    """PNG of the image with the heatmap blended on top"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(3, 3), dpi=100)
    ax.imshow(np.clip(np.asarray(image), 0.0, 1.0))
    ax.imshow(activation.heatmap, cmap="jet", alpha=alpha, vmin=0.0, vmax=1.0)
    ax.set_title(f"{activation.sample_id} -> {activation.target_class}", fontsize=7)
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, bbox_inches="tight", pad_inches=0.05)
    plt.close(fig)
    return path
