"""
Open-set metrics.

    tosc                    one-vs-rest accuracy over the known classes plus UNKNOWN
    tosc_deepfake_merged    the same after collapsing every forgery label to DEEPFAKE
    auroc                   Mann-Whitney AUROC, ties counted as one half
    unknown_detection_scores  maximum softmax probability per sample (higher = more known)
    known_class_auroc       REAL vs one known method on an equal split
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.metrics import roc_auc_score

from forensics import settings
from forensics.data.datamodel import LabelScheme
from forensics.openset.thresholds import classify_from_probs, index_to_labels, model_probs
from forensics.seeding import rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassTally:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class ConfusionTally:
    """One-vs-rest TP/TN/FP/FN per class over one prediction stream"""
    classes: tuple
    tallies: dict
    total: int

    def __post_init__(self):
        for name, tally in self.tallies.items():
            if tally.total != self.total:
                raise ValueError(f"Tally of {name} covers {tally.total} samples, expected {self.total}")

    @classmethod
    def from_labels(cls, y_true, y_pred, classes=None):
        """
        Args:
            y_true: length-M labels (UNKNOWN allowed)
            y_pred: length-M predicted labels
            classes: Label alphabet; the union of both streams when omitted

        Raises:
            ValueError on empty or mismatched input, or labels outside `classes`
        """
        y_true = np.asarray([str(y) for y in y_true])
        y_pred = np.asarray([str(y) for y in y_pred])
        if len(y_true) == 0:
            raise ValueError("Cannot tally an empty prediction stream")
        if len(y_true) != len(y_pred):
            raise ValueError(f"{len(y_true)} true labels for {len(y_pred)} predictions")
        observed = set(y_true) | set(y_pred)
        if classes is None:
            classes = tuple(sorted(observed))
        else:
            classes = tuple(classes)
            stray = observed - set(classes)
            if stray:
                raise ValueError(f"Labels {sorted(stray)} are outside the alphabet {list(classes)}")

        tallies = {}
        for name in classes:
            is_true = y_true == name
            is_pred = y_pred == name
            tallies[name] = ClassTally(
                tp=int(np.sum(is_true & is_pred)),
                tn=int(np.sum(~is_true & ~is_pred)),
                fp=int(np.sum(~is_true & is_pred)),
                fn=int(np.sum(is_true & ~is_pred)),
            )
        return cls(classes, tallies, len(y_true))

    @property
    def accuracy(self):
        correct = sum(t.tp + t.tn for t in self.tallies.values())
        total = sum(t.total for t in self.tallies.values())
        return correct / total


def tosc(y_true, y_pred, classes=None):
    """
    Open-set accuracy: sum(TP_i + TN_i) / sum(TP_i + TN_i + FP_i + FN_i)
    over the one-vs-rest tallies of every class, UNKNOWN included.

    Args:
        y_true: length-M labels
        y_pred: length-M predictions
        classes: Optional label alphabet (known classes + UNKNOWN)

    Returns:
        float in [0, 1]
    """
    return ConfusionTally.from_labels(y_true, y_pred, classes).accuracy


def open_set_alphabet(class_names):
    """Known classes of a classifier followed by UNKNOWN"""
    return tuple(class_names) + (settings.UNKNOWN,)


MERGED_ALPHABET = (settings.REAL, settings.DEEPFAKE)


def merge_deepfake(labels):
    """REAL stays REAL, every other label (UNKNOWN included) becomes DEEPFAKE"""
    return [settings.REAL if str(y) == settings.REAL else settings.DEEPFAKE for y in labels]


def tosc_deepfake_merged(y_true, y_pred):
    return tosc(merge_deepfake(y_true), merge_deepfake(y_pred), MERGED_ALPHABET)


def auroc(scores, positive):
    """
    Area under the ROC curve.

    Args:
        scores: length-M floats, higher = more positive
        positive: length-M booleans

    Returns:
        Fraction of (positive, negative) pairs ranked correctly, ties counted 1/2

    Raises:
        ValueError when only one class is present
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    positive = np.asarray(positive, dtype=bool).reshape(-1)
    if len(scores) != len(positive):
        raise ValueError(f"{len(scores)} scores for {len(positive)} labels")
    n_pos = int(positive.sum())
    if n_pos == 0 or n_pos == len(positive):
        raise ValueError(f"AUROC is undefined with {n_pos} positives and {len(positive) - n_pos} "
                         f"negatives; both classes must be present")
    return float(roc_auc_score(positive.astype(np.int64), scores))


def max_softmax_scores(probs):
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    return probs.max(axis=1)


DUMP_COLUMNS = ["sample_id", "true_label", "predicted", "argmax", "max_score", "unknown_score", "is_known"]


@dataclass(frozen=True, eq=False)
class ScoreDump:
    """Per-sample scores from which every open-set metric can be recomputed"""
    frame: pd.DataFrame

    def __post_init__(self):
        missing = set(DUMP_COLUMNS) - set(self.frame.columns)
        if missing:
            raise ValueError(f"Score dump lacks columns {sorted(missing)}")

    def __len__(self):
        return len(self.frame)

    @property
    def max_score(self):
        return self.frame["max_score"].to_numpy(dtype=np.float64)

    @property
    def is_known(self):
        return self.frame["is_known"].to_numpy(dtype=bool)

    def unknown_auroc(self):
        """Known samples as positives, ranked by maximum softmax probability"""
        return auroc(self.max_score, self.is_known)

    def inverse_unknown_auroc(self):
        """Inverted polarity: unknown samples as positives under the same score (1 - unknown_auroc)"""
        return auroc(self.max_score, ~self.is_known)

    @property
    def class_names(self):
        """Classifier classes, read from the p_<class> probability columns"""
        return tuple(c[2:] for c in self.frame.columns if c.startswith("p_"))

    def tosc(self, classes=None):
        """TOSC over the classifier's classes plus UNKNOWN, whether or not each occurs"""
        if classes is None and self.class_names:
            classes = open_set_alphabet(self.class_names)
        return tosc(self.frame["true_label"], self.frame["predicted"], classes)

    def tosc_deepfake_merged(self):
        return tosc_deepfake_merged(self.frame["true_label"], self.frame["predicted"])

    def closed_set_accuracy(self):
        """Accuracy of the softmax argmax over known samples"""
        known = self.frame[self.frame["is_known"].astype(bool)]
        if known.empty:
            return float("nan")
        return float((known["argmax"] == known["true_label"]).mean())

    def save_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(path, index=False)
        return path

    @classmethod
    def load_csv(cls, path):
        frame = pd.read_csv(path, dtype={"sample_id": str, "true_label": str, "predicted": str, "argmax": str})
        frame["is_known"] = frame["is_known"].astype(bool)
        return cls(frame)


def score_dump_from_probs(probs, sample_ids, true_labels, is_known, class_names, epsilon=None):
    """
    Args:
        probs: (M, K) softmax rows
        sample_ids: length-M ids
        true_labels: length-M labels (UNKNOWN for unknown samples)
        is_known: length-M booleans
        class_names: K class names of the classifier
        epsilon: Optional length-K thresholds; without them the prediction is the argmax

    Returns:
        ScoreDump
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    argmax = [class_names[i] for i in probs.argmax(axis=1)] if len(probs) else []
    if epsilon is not None:
        predicted = index_to_labels(classify_from_probs(probs, epsilon), class_names)
    else:
        predicted = argmax
    max_score = max_softmax_scores(probs) if len(probs) else np.empty(0)
    frame = pd.DataFrame({
        "sample_id": list(sample_ids),
        "true_label": list(true_labels),
        "predicted": predicted,
        "argmax": argmax,
        "max_score": max_score,
        "unknown_score": 1.0 - max_score,
        "is_known": np.asarray(is_known, dtype=bool),
    })
    for i, name in enumerate(class_names):
        frame[f"p_{name}"] = probs[:, i] if len(probs) else []
    return ScoreDump(frame)


def unknown_detection_scores(stack, samples, known_methods, thresholds=None, scheme=None, batch_size=256):
    """
    Maximum softmax probability of every sample.

    Args:
        stack: ModelStack with a classifier head
        samples: Test Samples, known and unknown
        known_methods: Method labels seen in training (REAL included)
        thresholds: Optional ThresholdTable; predictions become open-set labels
        scheme: LabelScheme of the classifier

    Returns:
        ScoreDump; max_score lies in [1/K, 1]
    """
    scheme = scheme or LabelScheme.FORGERY_SPECIFIC
    known_methods = set(known_methods)
    samples = list(samples)
    probs = model_probs(stack, samples, batch_size)
    is_known = [s.method_label in known_methods for s in samples]
    true_labels = [s.label(scheme) if known else settings.UNKNOWN for s, known in zip(samples, is_known)]
    epsilon = thresholds.vector(stack.class_names) if thresholds is not None else None
    return score_dump_from_probs(probs, [s.sample_id for s in samples], true_labels, is_known,
                                 stack.class_names, epsilon)


def equal_split(real_samples, method_samples, seed, method):
    """Same number of REAL and method samples, drawn without replacement"""
    n = min(len(real_samples), len(method_samples))
    if n == 0:
        raise ValueError(f"Equal split of REAL vs {method} needs both classes present")
    r = rng(seed, "equal-split", method)

    def pick(pool):
        return [pool[i] for i in np.sort(r.choice(len(pool), size=n, replace=False))]

    return pick(list(real_samples)), pick(list(method_samples))


def known_class_auroc(stack, samples, method, seed=0, scheme=None, batch_size=256):
    """
    Binary AUROC of REAL vs one known forgery method on an equal split.

    The score is P(method | x) / (P(method | x) + P(REAL | x)); under the
    binary scheme the FAKE column stands in for the method.

    Returns:
        float, the method as the positive class
    """
    scheme = scheme or LabelScheme.FORGERY_SPECIFIC
    column = scheme.relabel(method)
    if column not in stack.class_names or settings.REAL not in stack.class_names:
        raise ValueError(f"Classifier classes {stack.class_names} lack REAL or {column}")
    real, fakes = equal_split([s for s in samples if s.method_label == settings.REAL],
                              [s for s in samples if s.method_label == method], seed, method)
    probs = model_probs(stack, real + fakes, batch_size)
    p_method = probs[:, stack.class_names.index(column)]
    p_real = probs[:, stack.class_names.index(settings.REAL)]
    denominator = p_method + p_real
    score = np.divide(p_method, denominator, out=np.full_like(p_method, 0.5), where=denominator > 0)
    positive = np.r_[np.zeros(len(real), bool), np.ones(len(fakes), bool)]
    return auroc(score, positive)
