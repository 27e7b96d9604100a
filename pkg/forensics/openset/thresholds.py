"""
Class-wise rejection thresholds and open-set classification.

Calibration collects, for every known class i, the softmax confidence of the
training samples that the classifier assigns correctly to i, and takes the
lambda-th percentile of that set as the class threshold. At test time a
sample is known when at least one class reaches its threshold; it is then
assigned to the softmax argmax, otherwise it is UNKNOWN.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from forensics import settings
from forensics.data.datamodel import LabelScheme
from forensics.representation.model import predict_logits, sample_images

logger = logging.getLogger(__name__)

UNKNOWN_INDEX = -1
EMPTY_SUPPORT_THRESHOLD = 1.0


def softmax_probs(logits):
    """
    Softmax over the last axis with max-subtraction.

    Args:
        logits: (K,) or (M, K) finite array / tensor

    Returns:
        float64 array of the same shape, rows summing to 1
    """
    if hasattr(logits, "detach"):
        logits = logits.detach().cpu().numpy()
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("Logits must be finite")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class ThresholdTable:
    """Per-class rejection thresholds with the percentile they came from"""
    epsilon: dict
    lambda_percentile: float
    support_counts: dict = field(default_factory=dict)
    percentile_method: str = settings.PERCENTILE_METHOD

    def __post_init__(self):
        object.__setattr__(self, "epsilon", {str(k): float(v) for k, v in self.epsilon.items()})
        object.__setattr__(self, "support_counts", {str(k): int(v) for k, v in self.support_counts.items()})
        if not 0.0 <= self.lambda_percentile <= 100.0:
            raise ValueError(f"lambda must lie in [0, 100], got {self.lambda_percentile}")
        for name, eps in self.epsilon.items():
            if not 0.0 <= eps <= 1.0:
                raise ValueError(f"Threshold of class {name} outside [0, 1]: {eps}")
        missing = set(self.support_counts) - set(self.epsilon)
        if missing:
            raise ValueError(f"Support counts for classes without threshold: {sorted(missing)}")

    @property
    def classes(self):
        return tuple(self.epsilon)

    def vector(self, class_names):
        """Thresholds ordered like class_names; every class must be covered"""
        missing = [name for name in class_names if name not in self.epsilon]
        if missing:
            raise ValueError(f"Threshold table has no entry for classes {missing}")
        return np.array([self.epsilon[name] for name in class_names], dtype=np.float64)

    def to_dict(self):
        return {
            "epsilon": dict(self.epsilon),
            "lambda_percentile": float(self.lambda_percentile),
            "percentile_method": self.percentile_method,
            "support_counts": dict(self.support_counts),
        }

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
        return path

    @classmethod
    def load(cls, path):
        with open(path) as f:
            data = json.load(f)
        return cls(epsilon=data["epsilon"], lambda_percentile=data["lambda_percentile"],
                   support_counts=data.get("support_counts", {}),
                   percentile_method=data.get("percentile_method", settings.PERCENTILE_METHOD))


def thresholds_from_scores(probs, true_index, class_names, lambda_percentile=settings.LAMBDA_PERCENTILE,
                           percentile_method=settings.PERCENTILE_METHOD):
    """
    Threshold estimation from stored softmax outputs.

    Args:
        probs: (M, K) softmax probabilities of the training samples
        true_index: length-M true class indices in [0, K)
        class_names: K class names
        lambda_percentile: lambda in [0, 100]
        percentile_method: numpy percentile method ("lower" = nearest rank below)

    Returns:
        ThresholdTable; a class with no correctly predicted sample gets 1.0
    """
    probs = np.asarray(probs, dtype=np.float64)
    true_index = np.asarray(true_index, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[1] != len(class_names):
        raise ValueError(f"Expected probabilities of shape (M, {len(class_names)}), got {probs.shape}")
    if len(true_index) != len(probs):
        raise ValueError(f"{len(true_index)} labels for {len(probs)} score rows")
    if not 0.0 <= lambda_percentile <= 100.0:
        raise ValueError(f"lambda must lie in [0, 100], got {lambda_percentile}")

    predicted = probs.argmax(axis=1)
    epsilon, support = {}, {}
    for i, name in enumerate(class_names):
        correct = probs[(predicted == i) & (true_index == i), i]
        support[name] = len(correct)
        if len(correct) == 0:
            logger.warning("Class %s has no correctly classified training sample; "
                           "threshold set to %.1f (all %s predictions rejected)",
                           name, EMPTY_SUPPORT_THRESHOLD, name)
            epsilon[name] = EMPTY_SUPPORT_THRESHOLD
        else:
            epsilon[name] = float(np.percentile(correct, lambda_percentile, method=percentile_method))
    return ThresholdTable(epsilon, float(lambda_percentile), support, percentile_method)


def class_indices(samples, scheme, class_names):
    index = {name: i for i, name in enumerate(class_names)}
    labels = [s.label(scheme) for s in samples]
    unknown = sorted({label for label in labels if label not in index})
    if unknown:
        raise ValueError(f"Calibration samples carry labels outside the known classes: {unknown}")
    return np.array([index[label] for label in labels], dtype=np.int64)


def model_probs(stack, samples, batch_size=256):
    """(M, K) softmax probabilities of the stack's classifier"""
    if not samples:
        return np.empty((0, stack.num_classes))
    return softmax_probs(predict_logits(stack, sample_images(samples), batch_size))


def estimate_thresholds(stack, train_samples, lambda_percentile=settings.LAMBDA_PERCENTILE, scheme=None,
                        percentile_method=settings.PERCENTILE_METHOD, batch_size=256):
    """
    Estimate class-wise rejection thresholds from training samples only.

    Args:
        stack: ModelStack with a trained classifier head
        train_samples: Known-class training Samples
        lambda_percentile: lambda in [0, 100]
        scheme: LabelScheme of the classifier (defaults to the one implied
            by the stack's class names)
        percentile_method: numpy percentile method

    Returns:
        ThresholdTable over stack.class_names
    """
    if scheme is None:
        scheme = LabelScheme.BINARY if settings.FAKE in stack.class_names else LabelScheme.FORGERY_SPECIFIC
    true_index = class_indices(train_samples, scheme, stack.class_names)
    probs = model_probs(stack, list(train_samples), batch_size)
    table = thresholds_from_scores(probs, true_index, stack.class_names, lambda_percentile, percentile_method)
    logger.info("Thresholds at lambda=%g: %s", lambda_percentile,
                {k: round(v, 4) for k, v in table.epsilon.items()})
    return table


@dataclass(frozen=True, eq=False)
class OpenSetPrediction:
    predicted_class: str
    softmax: np.ndarray
    max_score: float

    @property
    def is_unknown(self):
        return self.predicted_class == settings.UNKNOWN


def classify_from_probs(probs, epsilon):
    """
    Open-set decision on stored softmax rows.

    Args:
        probs: (M, K) probabilities
        epsilon: length-K thresholds

    Returns:
        int array of class indices, UNKNOWN_INDEX for rejected rows
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    epsilon = np.asarray(epsilon, dtype=np.float64)
    if probs.shape[1] != len(epsilon):
        raise ValueError(f"{len(epsilon)} thresholds for {probs.shape[1]} classes")
    accepted = (probs >= epsilon[None, :]).any(axis=1)
    # argmax returns the lowest index among ties
    return np.where(accepted, probs.argmax(axis=1), UNKNOWN_INDEX)


def index_to_labels(indices, class_names):
    return [settings.UNKNOWN if i == UNKNOWN_INDEX else class_names[i] for i in indices]


def predictions_from_probs(probs, thresholds, class_names):
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    indices = classify_from_probs(probs, thresholds.vector(class_names))
    return [OpenSetPrediction(label, row, float(row.max()))
            for label, row in zip(index_to_labels(indices, class_names), probs)]


def classify_open_set(stack, images, thresholds, batch_size=256):
    """
    Classify images as a known class or UNKNOWN.

    Args:
        stack: ModelStack with a classifier head
        images: (H, W, 3) image or (B, H, W, 3) batch
        thresholds: ThresholdTable covering stack.class_names

    Returns:
        OpenSetPrediction, or a list of them for a batch
    """
    images = np.asarray(images, dtype=np.float32)
    single = images.ndim == 3
    batch = images[None] if single else images
    probs = softmax_probs(predict_logits(stack, batch, batch_size))
    predictions = predictions_from_probs(probs, thresholds, stack.class_names)
    return predictions[0] if single else predictions
