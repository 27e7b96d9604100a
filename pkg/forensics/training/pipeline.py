"""
Stage 1 (representation learning), weight averaging and Stage 2 (classifier
on the frozen encoder).

Stage 1 trains encoder + projection head on multi-view batches with the
configured contrastive loss and snapshots the encoder over the last epochs.
The snapshots are averaged into the encoder that Stage 2 freezes; Stage 2
only ever updates the classifier head.
"""
import copy
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd
import torch
import torch.nn as nn
from tqdm import tqdm

from forensics import settings
from forensics.config import config_hash
from forensics.data.augment import apply
from forensics.data.datamodel import build_multiview_batch
from forensics.errors import DivergenceError
from forensics.representation.checkpoints import save_checkpoint, save_model_stack
from forensics.representation.losses import LossVariant, cross_entropy_loss, stage1_loss
from forensics.representation.model import ModelStack, predict_logits, sample_images, to_tensor
from forensics.representation.swa import CheckpointSet, build_swa_encoder
from forensics.seeding import derive_seed, rng, state_digest

logger = logging.getLogger(__name__)

MIN_SAMPLES_PER_CLASS = 2


@dataclass
class EpochRecord:
    epoch: int
    loss_mean: float
    learning_rate: float
    wall_time: float


@dataclass
class TrainLog:
    """Per-epoch records of one training stage"""
    stage: str
    records: list = field(default_factory=list)

    def append(self, record):
        if self.records and record.epoch <= self.records[-1].epoch:
            raise ValueError(f"Epoch {record.epoch} does not follow epoch {self.records[-1].epoch}")
        self.records.append(record)

    @property
    def losses(self):
        return [r.loss_mean for r in self.records]

    def __len__(self):
        return len(self.records)

    def to_frame(self):
        frame = pd.DataFrame([asdict(r) for r in self.records],
                             columns=["epoch", "loss_mean", "learning_rate", "wall_time"])
        frame.insert(0, "stage", self.stage)
        return frame

    def append_csv(self, path):
        """Append the records to a CSV file (header written once)"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, mode="a", header=not path.exists(), index=False)
        return path


class Stage1Result(NamedTuple):
    stack: ModelStack
    checkpoints: CheckpointSet
    log: TrainLog
    class_names: tuple


class Stage2Result(NamedTuple):
    classifier_state: dict
    log: TrainLog
    class_names: tuple
    train_accuracy: float


class TrainedModel(NamedTuple):
    stack: ModelStack
    stage1: Stage1Result
    stage2: Stage2Result
    model_path: Path


def _notify(callback, status, message):
    if callback:
        callback(status, message)


def lr_factor(epoch, epochs, schedule, warmup_epochs=0):
    """
    Learning-rate multiplier for a zero-based epoch: linear warmup over
    warmup_epochs, then cosine decay to zero or a constant rate.
    """
    if epoch < warmup_epochs:
        return (epoch + 1) / (warmup_epochs + 1)
    if schedule == "constant":
        return 1.0
    span = max(1, epochs - warmup_epochs)
    return 0.5 * (1.0 + math.cos(math.pi * (epoch - warmup_epochs) / span))


def make_optimizer(parameters, optimizer_config, learning_rate, epochs, warmup_epochs=0):
    """
    Build the optimizer and its per-epoch learning-rate schedule.

    Returns:
        (torch.optim.Optimizer, scheduler)
    """
    parameters = [p for p in parameters if p.requires_grad]
    if optimizer_config.name == "sgd":
        optimizer = torch.optim.SGD(parameters, lr=learning_rate, momentum=optimizer_config.momentum,
                                    weight_decay=optimizer_config.weight_decay)
    else:
        optimizer = torch.optim.Adam(parameters, lr=learning_rate,
                                     weight_decay=optimizer_config.weight_decay)
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda e: lr_factor(e, epochs, optimizer_config.schedule, warmup_epochs))
    return optimizer, scheduler


def check_class_support(samples, scheme, minimum=MIN_SAMPLES_PER_CLASS):
    """
    Raises:
        ValueError if a class under the scheme has fewer than `minimum` samples
    """
    if not samples:
        raise ValueError("No training samples")
    counts = pd.Series([s.label(scheme) for s in samples]).value_counts()
    thin = counts[counts < minimum]
    if len(thin):
        raise ValueError(f"Classes with fewer than {minimum} training samples under {scheme.value}: "
                         f"{thin.to_dict()}")
    return counts.to_dict()


def batch_indices(n, batch_size, seed, *parts):
    """Shuffled index chunks covering range(n); the last chunk may be short"""
    order = rng(seed, *parts).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def embedding_spread(z):
    """Largest per-dimension standard deviation of a batch of embeddings"""
    return float(z.detach().std(dim=0).max()) if len(z) > 1 else 0.0


def stage1_train(
config, train_samples, out_dir=None, callback=None):
    """
    Train encoder + projection head with the configured Stage-1 loss.

    Args:
        config: RunConfig
        train_samples: Known-class training Samples
        out_dir: Directory for snapshots and the last good checkpoint, or None
        callback: Optional progress hook callback(status, message)

    Returns:
        Stage1Result(stack, checkpoints, log, class_names)

    Raises:
        DivergenceError on a non-finite loss; the stack is restored to the
        last completed epoch and its checkpoint path is attached
    """
    train_samples = list(train_samples)
    scheme = config.stage1_scheme
    check_class_support(train_samples, scheme)
    class_names = scheme.class_names(s.method_label for s in train_samples)
    out_dir = Path(out_dir) if out_dir is not None else None
    run_hash = config_hash(config)

    torch.manual_seed(derive_seed(config.seed, "stage1", "init"))
    stack = ModelStack(config.backbone, projection_bias=config.projection_bias)
    aux_head = None
    parameters = list(stack.encoder.parameters()) + list(stack.projection.parameters())
    if config.loss.variant is LossVariant.CROSS_ENTROPY:
        aux_head = nn.Linear(stack.embedding_dim, len(class_names))
        parameters += list(aux_head.parameters())
    optimizer, scheduler = make_optimizer(parameters, config.optimizer, config.optimizer.learning_rate,
                                          config.stage1_epochs, config.optimizer.warmup_epochs)

    swa_epochs = set(config.swa_epochs())
    checkpoints = CheckpointSet()
    log = TrainLog("stage1")
    last_good_state = copy.deepcopy(stack.state_dict())
    last_good_path = None

    _notify(callback, "start", f"Stage 1: {len(train_samples)} samples, classes {list(class_names)}, "
                               f"loss {config.loss.variant.value}")
    for epoch in range(1, config.stage1_epochs + 1):
        started = time.perf_counter()
        stack.train()
        if aux_head is not None:
            aux_head.train()
        losses = []
        spreads = []
        batches = batch_indices(len(train_samples), config.batch_size, config.seed, "stage1", "order", epoch)
        for b, idx in enumerate(tqdm(batches, desc=f"stage1 epoch {epoch}", leave=False, disable=None)):
            batch = build_multiview_batch([train_samples[i] for i in idx], config.augment, scheme,
                                          derive_seed(config.seed, "stage1", "views", epoch, b),
                                          class_names=class_names, workers=config.workers)
            r = stack.encoder(to_tensor(batch.views))
            z = stack.projection(r)
            logits = aux_head(r) if aux_head is not None else None
            loss = stage1_loss(config.loss, z, torch.from_numpy(batch.labels),
                               torch.from_numpy(batch.is_real), torch.from_numpy(batch.origin_index),
                               logits)
            if not torch.isfinite(loss):
                stack.load_state_dict(last_good_state)
                _notify(callback, "error", f"Stage 1 diverged at epoch {epoch}, batch {b}")
                raise DivergenceError(f"Non-finite Stage-1 loss at epoch {epoch}, batch {b}",
                                      last_good_checkpoint=last_good_path)
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(parameters, config.optimizer.max_grad_norm)
            optimizer.step()
            losses.append(float(loss.item()))
            spreads.append(embedding_spread(z))

        learning_rate = optimizer.param_groups[0]["lr"]
        scheduler.step()
        record = EpochRecord(epoch, float(np.mean(losses)), learning_rate, time.perf_counter() - started)
        log.append(record)
        if max(spreads) < settings.COLLAPSE_SPREAD:
            logger.warning("Stage 1 epoch %d: projected embeddings have collapsed (spread %.2g); "
                           "lower the learning rate or add warmup", epoch, max(spreads))
        last_good_state = copy.deepcopy(stack.state_dict())
        if out_dir is not None:
            last_good_path = save_checkpoint(out_dir / "stage1_last", last_good_state,
                                             {"epoch": epoch, "seed": config.seed, "config_hash": run_hash})
        if epoch in swa_epochs:
            checkpoints.add(epoch, stack.encoder)
            if out_dir is not None:
                save_checkpoint(out_dir / f"encoder_epoch_{epoch:03d}", stack.encoder.state_dict(),
                                {"epoch": epoch, "seed": config.seed, "config_hash": run_hash})
        logger.info("Stage 1 epoch %d/%d: loss %.4f lr %.4g (%.1fs)", epoch, config.stage1_epochs,
                    record.loss_mean, learning_rate, record.wall_time)
        _notify(callback, "epoch", f"Stage 1 epoch {epoch}: loss {record.loss_mean:.4f}")

    return Stage1Result(stack, checkpoints, log, class_names)


def attach_swa_encoder(stack, checkpoints, train_samples, batch_size=128):
    """Replace the stack's encoder by the average of the snapshots"""
    stack.encoder = build_swa_encoder(stack.encoder, checkpoints, sample_images(train_samples), batch_size)
    return stack


def _augmented_images(policy, samples, seed, *parts):
    return np.stack([apply(policy, s.image, derive_seed(seed, *parts, i)) for i, s in enumerate(samples)])


def training_accuracy(stack, samples, scheme, class_names, batch_size=256):
    index = {name: i for i, name in enumerate(class_names)}
    labels = np.array([index[s.label(scheme)] for s in samples])
    predicted = predict_logits(stack, sample_images(samples), batch_size).argmax(dim=1).numpy()
    return float((predicted == labels).mean())


def stage2_finetune(config, stack, train_samples, out_dir=None, callback=None):
    """
    Freeze the encoder and train a fresh classifier head with cross-entropy.

    Args:
        config: RunConfig (stage2_scheme, stage2_epochs, stage2_augment, optimizer)
        stack: ModelStack whose encoder is the averaged Stage-1 encoder
        train_samples: Known-class training Samples
        out_dir: Directory for the classifier checkpoint, or None
        callback: Optional progress hook callback(status, message)

    Returns:
        Stage2Result(classifier_state, log, class_names, train_accuracy)

    Raises:
        DivergenceError on a non-finite loss
        RuntimeError if the encoder weights changed during fine-tuning
    """
    train_samples = list(train_samples)
    scheme = config.stage2_scheme
    check_class_support(train_samples, scheme)
    class_names = scheme.class_names(s.method_label for s in train_samples)
    index = {name: i for i, name in enumerate(class_names)}
    labels = np.array([index[s.label(scheme)] for s in train_samples], dtype=np.int64)

    stack.freeze_encoder()
    encoder_digest = state_digest(stack.encoder)
    torch.manual_seed(derive_seed(config.seed, "stage2", "init"))
    classifier = stack.reset_classifier(len(class_names), class_names)
    optimizer, scheduler = make_optimizer(classifier.parameters(), config.optimizer,
                                          config.optimizer.stage2_learning_rate, config.stage2_epochs)
    log = TrainLog("stage2")

    _notify(callback, "start", f"Stage 2: classifier over {list(class_names)}")
    for epoch in range(1, config.stage2_epochs + 1):
        started = time.perf_counter()
        stack.train()
        losses = []
        batches = batch_indices(len(train_samples), config.batch_size, config.seed, "stage2", "order", epoch)
        for b, idx in enumerate(tqdm(batches, desc=f"stage2 epoch {epoch}", leave=False, disable=None)):
            images = _augmented_images(config.stage2_augment, [train_samples[i] for i in idx],
                                       config.seed, "stage2", "views", epoch, b)
            with torch.no_grad():
                r = stack.encoder(to_tensor(images))
            loss = cross_entropy_loss(classifier(r), torch.from_numpy(labels[idx]))
            if not torch.isfinite(loss):
                _notify(callback, "error", f"Stage 2 diverged at epoch {epoch}, batch {b}")
                raise DivergenceError(f"Non-finite Stage-2 loss at epoch {epoch}, batch {b}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.item()))

        learning_rate = optimizer.param_groups[0]["lr"]
        scheduler.step()
        record = EpochRecord(epoch, float(np.mean(losses)), learning_rate, time.perf_counter() - started)
        log.append(record)
        logger.info("Stage 2 epoch %d/%d: loss %.4f", epoch, config.stage2_epochs, record.loss_mean)
        _notify(callback, "epoch", f"Stage 2 epoch {epoch}: loss {record.loss_mean:.4f}")

    stack.eval()
    if state_digest(stack.encoder) != encoder_digest:
        raise RuntimeError("Encoder weights changed during Stage 2")
    accuracy = training_accuracy(stack, train_samples, scheme, class_names)
    classifier_state = {k: v.detach().clone() for k, v in classifier.state_dict().items()}
    if out_dir is not None:
        save_checkpoint(Path(out_dir) / "classifier", classifier_state,
                        {"class_names": list(class_names), "seed": config.seed})
    logger.info("Stage 2 training accuracy %.4f", accuracy)
    return Stage2Result(classifier_state, log, class_names, accuracy)


def train_model(config, train_samples, out_dir=None, callback=None):
    """
    Stage 1, weight averaging and Stage 2 in one call.

    When out_dir is given the full ModelStack is written to out_dir/model.npz
    and both logs are appended to out_dir/train_log.csv.

    Returns:
        TrainedModel(stack, stage1, stage2, model_path)
    """
    out_dir = Path(out_dir) if out_dir is not None else None
    stage1 = stage1_train(config, train_samples, out_dir, callback)
    if not math.isfinite(stage1.log.losses[-1]):
        raise DivergenceError("Stage 1 finished with a non-finite loss")
    stack = attach_swa_encoder(stage1.stack, stage1.checkpoints, train_samples)
    _notify(callback, "info", f"Averaged {len(stage1.checkpoints)} encoder snapshots "
                              f"(epochs {stage1.checkpoints.epochs})")
    stage2 = stage2_finetune(config, stack, train_samples, out_dir, callback)

    model_path = None
    if out_dir is not None:
        model_path = save_model_stack(out_dir / "model", stack, {
            "config_hash": config_hash(config),
            "seed": config.seed,
            "stage1_class_names": list(stage1.class_names),
            "train_accuracy": stage2.train_accuracy,
        })
        stage1.log.append_csv(out_dir / "train_log.csv")
        stage2.log.append_csv(out_dir / "train_log.csv")
    _notify(callback, "success", f"Training finished (train accuracy {stage2.train_accuracy:.3f})")
    return TrainedModel(stack, stage1, stage2, model_path)
