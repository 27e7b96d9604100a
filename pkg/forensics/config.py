"""
Run configuration: nested frozen dataclasses read from / written to YAML.
"""
import dataclasses
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import yaml

from forensics import settings
from forensics.data.augment import AugmentPolicy
from forensics.data.datamodel import LabelScheme
from forensics.errors import ConfigError
from forensics.representation.losses import LossConfig, LossVariant
from forensics.seeding import sha256_hex


@dataclass(frozen=True)
class DatasetConfig:
    root: str = "data/synthetic"
    seed: int = 0
    n_videos: int = settings.N_VIDEOS
    frames_per_video: int = settings.FRAMES_PER_VIDEO
    frames_per_video_sampled: int = settings.FRAMES_PER_VIDEO_SAMPLED
    ratios: tuple = settings.SPLIT_RATIOS
    image_side: int = settings.SYNTHETIC_IMAGE_SIDE
    extra_methods: tuple = ()


@dataclass(frozen=True)
class OptimizerConfig:
    name: str = settings.OPTIMIZER
    learning_rate: float = settings.LEARNING_RATE
    stage2_learning_rate: float = settings.STAGE2_LEARNING_RATE
    weight_decay: float = settings.WEIGHT_DECAY
    momentum: float = settings.MOMENTUM
    schedule: str = "cosine"
    warmup_epochs: int = settings.WARMUP_EPOCHS
    max_grad_norm: float = settings.MAX_GRAD_NORM

    def __post_init__(self):
        if self.name not in ("sgd", "adam"):
            raise ConfigError(f"optimizer.name must be 'sgd' or 'adam', got {self.name!r}")
        if self.schedule not in ("cosine", "constant"):
            raise ConfigError(f"optimizer.schedule must be 'cosine' or 'constant', got {self.schedule!r}")
        if self.learning_rate <= 0 or self.stage2_learning_rate <= 0:
            raise ConfigError("Learning rates must be > 0")
        if self.warmup_epochs < 0:
            raise ConfigError(f"optimizer.warmup_epochs must be >= 0, got {self.warmup_epochs}")
        if self.max_grad_norm <= 0:
            raise ConfigError(f"optimizer.max_grad_norm must be > 0, got {self.max_grad_norm}")


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)
    stage2_augment: AugmentPolicy = field(default_factory=AugmentPolicy.light)
    stage1_scheme: LabelScheme = LabelScheme.FORGERY_SPECIFIC
    stage2_scheme: LabelScheme = LabelScheme.FORGERY_SPECIFIC
    backbone: str = settings.BACKBONE
    projection_bias: bool = False
    batch_size: int = settings.BATCH_SIZE
    stage1_epochs: int = settings.STAGE1_EPOCHS
    stage2_epochs: int = settings.STAGE2_EPOCHS
    swa_fraction: float = settings.SWA_FRACTION
    lambda_percentile: float = settings.LAMBDA_PERCENTILE
    percentile_method: str = settings.PERCENTILE_METHOD
    lambda_sweep: tuple = settings.LAMBDA_SWEEP
    output_dir: str = "runs"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "stage1_scheme", LabelScheme(self.stage1_scheme))
        object.__setattr__(self, "stage2_scheme", LabelScheme(self.stage2_scheme))
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1 (views per batch = 2 x batch_size), got {self.batch_size}")
        if self.stage1_epochs < 1 or self.stage2_epochs < 1:
            raise ConfigError("Epoch counts must be >= 1")
        if not 0.0 < self.swa_fraction <= 1.0:
            raise ConfigError(f"swa_fraction must lie in (0, 1], got {self.swa_fraction}")
        for lam in (self.lambda_percentile, *self.lambda_sweep):
            if not 0.0 <= lam <= 100.0:
                raise ConfigError(f"lambda percentiles must lie in [0, 100], got {lam}")

    def swa_epochs(self):
        """Epochs (1-based) whose encoder is snapshotted for averaging"""
        n = max(1, int(round(self.swa_fraction * self.stage1_epochs)))
        return list(range(self.stage1_epochs - n + 1, self.stage1_epochs + 1))

    def validate_paths(self):
        root = Path(self.dataset.root)
        if not root.is_dir():
            raise ConfigError(f"dataset.root {root} does not exist")
        return self


_NESTED = {
    "dataset": DatasetConfig,
    "loss": LossConfig,
    "optimizer": OptimizerConfig,
    "augment": AugmentPolicy,
    "stage2_augment": AugmentPolicy,
}


def _plain(value):
    if isinstance(value, Enum):
        return value.value
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    return value


def config_to_dict(config):
    return _plain(config)


def _tuples(section_cls, values):
    out = dict(values)
    for f in dataclasses.fields(section_cls):
        if f.name in out and isinstance(out[f.name], list):
            out[f.name] = tuple(out[f.name])
    return out


def config_from_dict(data):
    """Build a RunConfig from a (possibly partial) nested dict"""
    data = dict(data or {})
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
    kwargs = {}
    try:
        for key, value in data.items():
            if key in _NESTED:
                section_cls = _NESTED[key]
                section_keys = {f.name for f in dataclasses.fields(section_cls)}
                bad = set(value or {}) - section_keys
                if bad:
                    raise ConfigError(f"Unknown keys in '{key}': {sorted(bad)}")
                kwargs[key] = section_cls(**_tuples(section_cls, value or {}))
            elif isinstance(value, list):
                kwargs[key] = tuple(value)
            else:
                kwargs[key] = value
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"Invalid configuration: {exc}") from exc


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file {path} does not exist")
    with open(path) as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"Cannot parse {path}: {exc}") from exc
    return config_from_dict(data)


def save_config(config, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(config_to_dict(config), f, sort_keys=False)
    return path


def config_hash(config):
    """SHA-256 of the canonical JSON form; excludes the output directory"""
    data = config_to_dict(config)
    data.pop("output_dir", None)
    return sha256_hex(json.dumps(data, sort_keys=True))


def with_overrides(config, seed=None, output_dir=None, alpha=None, lambda_percentile=None,
                   variant=None, stage1_scheme=None, stage2_scheme=None):
    """Copy of config with CLI / ablation overrides applied"""
    changes = {}
    if seed is not None:
        changes["seed"] = int(seed)
    if output_dir is not None:
        changes["output_dir"] = str(output_dir)
    if lambda_percentile is not None:
        changes["lambda_percentile"] = float(lambda_percentile)
    if stage1_scheme is not None:
        changes["stage1_scheme"] = LabelScheme(stage1_scheme)
    if stage2_scheme is not None:
        changes["stage2_scheme"] = LabelScheme(stage2_scheme)
    try:
        if alpha is not None or variant is not None:
            changes["loss"] = dataclasses.replace(
                config.loss,
                alpha=float(alpha) if alpha is not None else config.loss.alpha,
                variant=LossVariant(variant) if variant is not None else config.loss.variant,
            )
        return dataclasses.replace(config, **changes)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
