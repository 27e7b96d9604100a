"""
Frame-directory ingestion and manifest persistence.

Layout: root/<method_label>/<video_id>/<frame_idx>.png
Manifest: root/manifest.csv (path,video_id,frame_idx,method_label) plus a
root/dataset.json sidecar recording the dataset seed.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from PIL import Image, UnidentifiedImageError

from forensics import settings
from forensics.errors import DatasetError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"
SIDECAR_NAME = "dataset.json"
MANIFEST_COLUMNS = ["path", "video_id", "frame_idx", "method_label"]


@dataclass(frozen=True)
class ManifestRow:
    relative_path: str
    video_id: str
    frame_idx: int
    method_label: str

    @property
    def key(self):
        return self.video_id, self.frame_idx, self.method_label


@dataclass(frozen=True)
class DatasetManifest:
    """Index of every frame under a dataset root"""
    root: Path
    rows: tuple = ()
    dataset_seed: int = None
    image_side: int = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))
        object.__setattr__(self, "rows", tuple(self.rows))
        seen = set()
        for row in self.rows:
            if row.key in seen:
                raise DatasetError(f"Duplicate manifest entry {row.key}")
            seen.add(row.key)

    def __len__(self):
        return len(self.rows)

    @property
    def methods(self):
        """Forgery method labels present (REAL excluded), sorted"""
        return tuple(sorted({r.method_label for r in self.rows} - {settings.REAL}))

    @property
    def video_ids(self):
        return tuple(sorted({r.video_id for r in self.rows}))

    def path_of(self, row):
        return self.root / row.relative_path

    def to_frame(self):
        return pd.DataFrame(
            [(r.relative_path, r.video_id, r.frame_idx, r.method_label) for r in self.rows],
            columns=MANIFEST_COLUMNS,
        )


def write_manifest(manifest, extra=None):
    """Persist manifest.csv and the dataset.json sidecar under manifest.root"""
    manifest.to_frame().to_csv(manifest.root / MANIFEST_NAME, index=False)
    sidecar = {"dataset_seed": manifest.dataset_seed, "image_side": manifest.image_side}
    sidecar.update(extra or {})
    with open(manifest.root / SIDECAR_NAME, "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)


def read_manifest(root):
    """Load a manifest written by write_manifest"""
    root = Path(root)
    csv_path = root / MANIFEST_NAME
    if not csv_path.exists():
        raise DatasetError(f"No {MANIFEST_NAME} under {root}")
    frame = pd.read_csv(csv_path, dtype={"path": str, "video_id": str, "method_label": str, "frame_idx": int})
    missing = set(MANIFEST_COLUMNS) - set(frame.columns)
    if missing:
        raise DatasetError(f"{csv_path} is missing columns {sorted(missing)}")
    sidecar = _read_sidecar(root)
    rows = tuple(ManifestRow(p, v, int(i), m) for p, v, i, m in frame[MANIFEST_COLUMNS].itertuples(index=False))
    return DatasetManifest(root=root, rows=rows, dataset_seed=sidecar.get("dataset_seed"),
                           image_side=sidecar.get("image_side"), metadata=sidecar)


def _read_sidecar(root):
    path = Path(root) / SIDECAR_NAME
    if not path.exists():
        return {}
    with open(path) as f:
        return json.load(f)


def load_image(path, expected_side=None):
    """
    Read an image as float32 HxWx3 in [0, 1].

    Raises:
        DatasetError naming the file if it cannot be decoded or has the wrong shape
    """
    try:
        with Image.open(path) as img:
            array = np.asarray(img.convert("RGB") if img.mode != "RGB" else img, dtype=np.float32) / 255.0
    except (OSError, UnidentifiedImageError) as exc:
        raise DatasetError(f"Cannot read image {path}: {exc}") from exc
    if array.ndim != 3 or array.shape[2] != 3 or array.shape[0] != array.shape[1]:
        raise DatasetError(f"Image {path} has shape {array.shape}, expected square HxWx3")
    if expected_side is not None and array.shape[0] != expected_side:
        raise DatasetError(f"Image {path} has side {array.shape[0]}, expected {expected_side}")
    return array


def allowed_methods(extra_methods=()):
    return {settings.REAL, *settings.SYNTHETIC_METHODS, *settings.EXTRA_SYNTHETIC_METHODS,
            *settings.FACEFORENSICS_METHODS, *extra_methods}


def load_framedir(root, extra_methods=(), expected_side=None, callback=None):
    """
    Index a directory of pre-cropped frames.

    Every file is decoded once to validate its shape.

    Args:
        root: Directory laid out as <method_label>/<video_id>/<frame_idx>.png
        extra_methods: Method directory names accepted besides the built-in ones
        expected_side: Required image side, or None to accept any square size
        callback: Optional progress hook callback(status, message)

    Returns:
        DatasetManifest (empty, with a warning, when root holds no frames)
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"Frame directory {root} does not exist")
    accepted = allowed_methods(extra_methods)
    sidecar = _read_sidecar(root)

    rows = []
    side = expected_side
    for method_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        if method_dir.name not in accepted:
            raise DatasetError(
                f"Unknown method directory '{method_dir.name}' in {root}; declare it in the config "
                f"(dataset.extra_methods) to accept it")
        for video_dir in sorted(p for p in method_dir.iterdir() if p.is_dir()):
            for frame_path in sorted(video_dir.glob("*.png")):
                try:
                    frame_idx = int(frame_path.stem)
                except ValueError:
                    raise DatasetError(f"Frame file name {frame_path} is not an integer index") from None
                image = load_image(frame_path, side)
                side = image.shape[0]
                rows.append(ManifestRow(frame_path.relative_to(root).as_posix(), video_dir.name,
                                        frame_idx, method_dir.name))
        if callback:
            callback("progress", f"Indexed {method_dir.name}: {len(rows)} frames so far")

    if not rows:
        logger.warning("No frames found under %s; returning an empty manifest", root)
    rows.sort(key=lambda r: (r.method_label, r.video_id, r.frame_idx))
    return DatasetManifest(root=root, rows=tuple(rows), dataset_seed=sidecar.get("dataset_seed"),
                           image_side=side, metadata=sidecar)
