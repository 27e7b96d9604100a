"""
Stochastic view augmentation for the contrastive stage.

Every random draw comes from a generator seeded with the caller's seed, and
all draws happen regardless of which operations fire, so a given seed always
consumes the same stream.
"""
from dataclasses import dataclass

import numpy as np
import torch
import torchvision.transforms.v2.functional as TF
from torchvision.transforms import InterpolationMode

from forensics import settings


@dataclass(frozen=True)
class AugmentPolicy:
    """Augmentation magnitudes; operates on pixels only, never on labels"""
    crop_scale_range: tuple = settings.CROP_SCALE_RANGE
    flip_prob: float = settings.FLIP_PROB
    color_jitter_strength: float = settings.COLOR_JITTER_STRENGTH
    grayscale_prob: float = settings.GRAYSCALE_PROB
    rotation_degrees: float = settings.ROTATION_DEGREES

    def __post_init__(self):
        lo, hi = self.crop_scale_range
        object.__setattr__(self, "crop_scale_range", (float(lo), float(hi)))
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError(f"crop_scale_range must satisfy 0 < lo <= hi <= 1, got {self.crop_scale_range}")
        for name in ("flip_prob", "grayscale_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be a probability, got {value}")
        if self.color_jitter_strength < 0:
            raise ValueError(f"color_jitter_strength must be >= 0, got {self.color_jitter_strength}")
        if self.rotation_degrees < 0:
            raise ValueError(f"rotation_degrees must be >= 0, got {self.rotation_degrees}")

    @classmethod
    def identity(cls):
        return cls(crop_scale_range=(1.0, 1.0), flip_prob=0.0, color_jitter_strength=0.0,
                   grayscale_prob=0.0, rotation_degrees=0.0)

    @classmethod
    def light(cls):
        """Flip and mild crop; used while fitting the classifier head"""
        return cls(crop_scale_range=(0.9, 1.0), flip_prob=0.5, color_jitter_strength=0.0,
                   grayscale_prob=0.0, rotation_degrees=0.0)


def apply(policy, image, seed):
    """
    Produce one augmented view of an image.

    Args:
        policy: AugmentPolicy
        image: float array HxWx3 with values in [0, 1]
        seed: Integer seed; identical seeds give identical views

    Returns:
        float32 array with the input's shape, clipped to [0, 1]
    """
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"Expected an HxWx3 image, got shape {image.shape}")
    if image.size and (image.min() < 0.0 or image.max() > 1.0):
        raise ValueError("Image values must lie in [0, 1]")

    rng = np.random.default_rng(seed)
    height, width = image.shape[:2]

    scale = rng.uniform(*policy.crop_scale_range)
    crop_h = max(1, min(height, int(round(np.sqrt(scale) * height))))
    crop_w = max(1, min(width, int(round(np.sqrt(scale) * width))))
    top = int(rng.integers(0, height - crop_h + 1))
    left = int(rng.integers(0, width - crop_w + 1))
    flip = rng.random() < policy.flip_prob
    s = policy.color_jitter_strength
    brightness, contrast, saturation = rng.uniform(max(0.0, 1 - s), 1 + s, size=3)
    hue = rng.uniform(-min(0.5, s / 4), min(0.5, s / 4))
    jitter_order = rng.permutation(4)
    grayscale = rng.random() < policy.grayscale_prob
    angle = rng.uniform(-policy.rotation_degrees, policy.rotation_degrees)

    view = torch.from_numpy(image.copy()).permute(2, 0, 1)
    if (crop_h, crop_w) != (height, width):
        view = TF.resized_crop(view, top, left, crop_h, crop_w, size=[height, width],
                               interpolation=InterpolationMode.BILINEAR, antialias=True)
    if flip:
        view = TF.horizontal_flip(view)
    if s > 0:
        ops = (
            lambda v: TF.adjust_brightness(v, float(brightness)),
            lambda v: TF.adjust_contrast(v, float(contrast)),
            lambda v: TF.adjust_saturation(v, float(saturation)),
            lambda v: TF.adjust_hue(v, float(hue)),
        )
        for i in jitter_order:
            view = ops[i](view).clamp(0.0, 1.0)
    if grayscale:
        view = TF.rgb_to_grayscale(view, num_output_channels=3)
    if policy.rotation_degrees > 0:
        view = TF.rotate(view, float(angle), interpolation=InterpolationMode.BILINEAR)

    return np.clip(view.permute(1, 2, 0).numpy(), 0.0, 1.0).astype(np.float32)
