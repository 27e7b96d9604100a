"""
Encoder, projection head and classifier head.

The encoder maps an image to a 128-d embedding r. The projection head maps r
to a unit vector z for the contrastive losses; the classifier head maps r to
K logits once the encoder is frozen.
"""
import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
import torchvision

from forensics import settings

NORM_EPS = 1e-8


def _conv_block(in_channels, out_channels):
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1, bias=False),
        nn.BatchNorm2d(out_channels),
        nn.ReLU(inplace=True),
    )


class ConvEncoder(nn.Module):
    """Six 3x3 conv blocks with two 2x downsamplings, pooled to a 128-d embedding"""

    def __init__(self, embedding_dim=settings.EMBEDDING_DIM, width=32):
        super().__init__()
        self.features = nn.Sequential(
            _conv_block(3, width),
            _conv_block(width, width),
            nn.MaxPool2d(2),
            _conv_block(width, 2 * width),
            _conv_block(2 * width, 2 * width),
            nn.MaxPool2d(2),
            _conv_block(2 * width, 4 * width),
            _conv_block(4 * width, 4 * width),
        )
        self.fc = nn.Linear(4 * width, embedding_dim)

    def forward_features(self, x):
        """Final convolutional grid (B, C, h, w)"""
        return self.features(x)

    def embed(self, grid):
        return self.fc(torch.flatten(F.adaptive_avg_pool2d(grid, 1), 1))

    def forward(self, x):
        return self.embed(self.forward_features(x))


class DenseNetEncoder(nn.Module):
    """DenseNet121 feature extractor with a linear map to the embedding size"""

    def __init__(self, embedding_dim=settings.EMBEDDING_DIM):
        super().__init__()
        backbone = torchvision.models.densenet121(weights=None)
        self.features = backbone.features
        self.fc = nn.Linear(backbone.classifier.in_features, embedding_dim)

    def forward_features(self, x):
        return F.relu(self.features(x))

    def embed(self, grid):
        return self.fc(torch.flatten(F.adaptive_avg_pool2d(grid, 1), 1))

    def forward(self, x):
        return self.embed(self.forward_features(x))


BACKBONES = {
    "conv6": ConvEncoder,
    "densenet121": DenseNetEncoder,
}


class ProjectionHead(nn.Module):
    """Linear map followed by L2 normalisation"""

    def __init__(self, dim=settings.EMBEDDING_DIM, bias=False):
        super().__init__()
        self.linear = nn.Linear(dim, dim, bias=bias)

    def forward(self, r):
        v = self.linear(r)
        return v / (v.norm(dim=1, keepdim=True) + NORM_EPS)


class ModelStack(nn.Module):
    """Encoder + projection head + (optional) classifier head"""

    def __init__(self, backbone=settings.BACKBONE, num_classes=0, class_names=(),
                 projection_bias=False, embedding_dim=settings.EMBEDDING_DIM):
        super().__init__()
        if backbone not in BACKBONES:
            raise ValueError(f"Unknown backbone '{backbone}'; choose from {sorted(BACKBONES)}")
        self.backbone = backbone
        self.embedding_dim = embedding_dim
        self.encoder = BACKBONES[backbone](embedding_dim)
        self.projection = ProjectionHead(embedding_dim, bias=projection_bias)
        self.classifier = None
        self.class_names = tuple(class_names)
        self.encoder_frozen = False
        if num_classes:
            self.reset_classifier(num_classes, class_names)

    def reset_classifier(self, num_classes, class_names=()):
        if class_names and len(class_names) != num_classes:
            raise ValueError(f"{len(class_names)} class names for {num_classes} classes")
        self.classifier = nn.Linear(self.embedding_dim, num_classes)
        self.class_names = tuple(class_names)
        return self.classifier

    @property
    def num_classes(self):
        return 0 if self.classifier is None else self.classifier.out_features

    def freeze_encoder(self):
        for p in self.encoder.parameters():
            p.requires_grad_(False)
        self.encoder_frozen = True
        self.encoder.eval()

    def train(self, mode=True):
        super().train(mode)
        if self.encoder_frozen:
            # BatchNorm statistics of a frozen encoder must not move
            self.encoder.eval()
        return self

    def logits(self, x):
        if self.classifier is None:
            raise ValueError("ModelStack has no classifier head yet")
        return self.classifier(self.encoder(x))


def to_tensor(images):
    """NHWC numpy/torch images in [0,1] -> NCHW float32 tensor"""
    if isinstance(images, torch.Tensor):
        tensor = images.float()
        if tensor.ndim == 4 and tensor.shape[-1] == 3 and tensor.shape[1] != 3:
            tensor = tensor.permute(0, 3, 1, 2)
    else:
        array = np.asarray(images, dtype=np.float32)
        if array.ndim != 4 or array.shape[-1] != 3:
            raise ValueError(f"Expected a batch of HxWx3 images, got shape {array.shape}")
        tensor = torch.from_numpy(np.ascontiguousarray(array)).permute(0, 3, 1, 2)
    if tensor.ndim != 4 or tensor.shape[1] != 3:
        raise ValueError(f"Expected a batch of 3-channel images, got shape {tuple(tensor.shape)}")
    return tensor.contiguous()


def _batched(stack, images, fn, batch_size):
    tensor = to_tensor(images)
    was_training = stack.training
    stack.eval()
    try:
        with torch.no_grad():
            outputs = [fn(tensor[i:i + batch_size]) for i in range(0, len(tensor), batch_size)]
    finally:
        stack.train(was_training)
    if not outputs:
        return torch.empty(0)
    return torch.cat(outputs)


def encode(stack, images, batch_size=256):
    """
    Embed a batch of images in eval mode.

    Args:
        stack: ModelStack
        images: (B, H, W, 3) array or (B, 3, H, W) tensor

    Returns:
        Tensor (B, 128)
    """
    return _batched(stack, images, stack.encoder, batch_size)


def project(stack, r):
    """Unit-normalised projection of embeddings r (B, 128)"""
    r = torch.as_tensor(r, dtype=torch.float32)
    if r.ndim != 2 or r.shape[1] != stack.embedding_dim:
        raise ValueError(f"Expected embeddings of shape (B, {stack.embedding_dim}), got {tuple(r.shape)}")
    with torch.no_grad():
        return stack.projection(r)


def predict_logits(stack, images, batch_size=256):
    """Classifier logits (B, K) in eval mode"""
    return _batched(stack, images, stack.logits, batch_size)


def sample_images(samples):
    return np.stack([s.image for s in samples]) if samples else np.empty((0, 1, 1, 3), np.float32)
