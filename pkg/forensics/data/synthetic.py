"""
Deterministic synthetic forgery benchmark.

Pristine "videos" are sequences of procedurally drawn face-like frames (smooth
background, elliptical face, eye and mouth blobs) whose colours and geometry
are fixed per video and drift slightly per frame. Each pristine video is
copied through every forgery operator:

    M1  additive low-frequency sinusoidal watermark in the face   (global-signal)
    M2  alpha-blended rectangular patch swap between face halves  (local-region)
    M3  per-channel affine colour shift of the inner face         (global-signal)
    M4  blur/sharpen ring at the face boundary                    (local-region)
    M5  block mosaic inside the face (cross-dataset targets only)

Operator parameters are drawn once per (video, method), so all frames of one
manipulated video share the same artifact, as a real forgery pipeline would.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from forensics import settings
from forensics.data.framedir import DatasetManifest, ManifestRow, write_manifest
from forensics.errors import DatasetError
from forensics.seeding import derive_seed, rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FaceGeometry:
    """Face ellipse of one frame, in pixels"""
    cx: float
    cy: float
    ax: float
    ay: float

    def grid(self, side):
        yy, xx = np.mgrid[0:side, 0:side].astype(np.float64) + 0.5
        u = (xx - self.cx) / self.ax
        v = (yy - self.cy) / self.ay
        return u, v

    def radius(self, side):
        u, v = self.grid(side)
        return np.sqrt(u * u + v * v)

    def mask(self, side, ramp_px=1.5):
        """Soft face mask in [0, 1], 1 inside the ellipse"""
        return np.clip((1.0 - self.radius(side)) * self.ax / ramp_px + 0.5, 0.0, 1.0)


@dataclass(frozen=True)
class VideoParams:
    """Per-video appearance, drawn from the video seed"""
    seed: int
    bg_top: np.ndarray
    bg_bottom: np.ndarray
    skin: np.ndarray
    eye_color: np.ndarray
    mouth_color: np.ndarray
    center: tuple
    axes: tuple
    eye_offset: tuple
    eye_radius: float
    mouth_offset: float
    mouth_axes: tuple
    motion_phase: tuple

    @classmethod
    def draw(cls, video_seed, side):
        r = np.random.default_rng(video_seed)
        ax = side * r.uniform(0.24, 0.30)
        ay = side * r.uniform(0.31, 0.37)
        return cls(
            seed=video_seed,
            bg_top=r.uniform(0.1, 0.9, size=3),
            bg_bottom=r.uniform(0.1, 0.9, size=3),
            skin=np.array([r.uniform(0.55, 0.85), r.uniform(0.40, 0.70), r.uniform(0.30, 0.60)]),
            eye_color=r.uniform(0.0, 0.25, size=3),
            mouth_color=np.array([r.uniform(0.5, 0.8), r.uniform(0.1, 0.3), r.uniform(0.1, 0.3)]),
            center=(side * r.uniform(0.45, 0.55), side * r.uniform(0.45, 0.55)),
            axes=(ax, ay),
            eye_offset=(ax * r.uniform(0.35, 0.45), ay * r.uniform(0.20, 0.30)),
            eye_radius=ax * r.uniform(0.10, 0.15),
            mouth_offset=ay * r.uniform(0.40, 0.50),
            mouth_axes=(ax * r.uniform(0.30, 0.45), ay * r.uniform(0.06, 0.10)),
            motion_phase=tuple(r.uniform(0, 2 * np.pi, size=2)),
        )

    def geometry(self, frame_idx, side):
        amplitude = 0.02 * side
        dx = amplitude * np.sin(0.7 * frame_idx + self.motion_phase[0])
        dy = amplitude * np.sin(0.5 * frame_idx + self.motion_phase[1])
        return FaceGeometry(self.center[0] + dx, self.center[1] + dy, *self.axes)


def render_pristine_frame(params, frame_idx, side):
    """Draw one pristine frame as float64 HxWx3 in [0, 1]"""
    geometry = params.geometry(frame_idx, side)
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64) + 0.5

    t = (yy / side)[..., None]
    background = (1 - t) * params.bg_top + t * params.bg_bottom
    noise_rng = np.random.default_rng(derive_seed(params.seed, "background"))
    smooth = ndimage.gaussian_filter(noise_rng.normal(size=(side, side, 3)), sigma=(side / 8, side / 8, 0))
    background = background + 0.05 * smooth / (np.abs(smooth).max() + 1e-12)

    u, _ = geometry.grid(side)
    face_alpha = geometry.mask(side)[..., None]
    shading = (1.0 - 0.15 * u)[..., None]
    image = (1 - face_alpha) * background + face_alpha * params.skin * shading

    ex, ey = params.eye_offset
    for sign in (-1, 1):
        d = np.hypot(xx - (geometry.cx + sign * ex), yy - (geometry.cy - ey))
        eye_alpha = np.clip(params.eye_radius - d + 0.5, 0.0, 1.0)[..., None]
        image = (1 - eye_alpha) * image + eye_alpha * params.eye_color

    mx, my = params.mouth_axes
    dm = np.hypot((xx - geometry.cx) / mx, (yy - (geometry.cy + params.mouth_offset)) / my)
    mouth_alpha = np.clip((1.0 - dm) * my + 0.5, 0.0, 1.0)[..., None]
    image = (1 - mouth_alpha) * image + mouth_alpha * params.mouth_color

    frame_rng = np.random.default_rng(derive_seed(params.seed, "frame", frame_idx))
    image = image + frame_rng.normal(scale=0.01, size=image.shape)
    return np.clip(image, 0.0, 1.0)


class ForgeryOperator:
    """Base class for parametric manipulations applied inside the face region"""
    name = None
    family = None

    def draw_params(self, r):
        raise NotImplementedError("Subclasses must implement draw_params()")

    def apply(self, image, geometry, params):
        raise NotImplementedError("Subclasses must implement apply()")

    def __call__(self, image, geometry, params):
        side = image.shape[0]
        out = self.apply(np.asarray(image, dtype=np.float64), geometry, params)
        if out.shape != (side, side, 3):
            raise RuntimeError(f"{self.name} changed the image shape to {out.shape}")
        return np.clip(out, 0.0, 1.0)


class WatermarkOperator(ForgeryOperator):
    name = "M1"
    family = "global-signal"

    def draw_params(self, r):
        return {
            "freq": r.uniform(1.5, 3.0, size=2) * r.choice([-1, 1], size=2),
            "phase": r.uniform(0, 2 * np.pi),
            "amplitude": r.uniform(0.06, 0.10),
            "channels": r.uniform(0.5, 1.0, size=3),
        }

    def apply(self, image, geometry, params):
        side = image.shape[0]
        u, v = geometry.grid(side)
        wave = np.sin(np.pi * (params["freq"][0] * u + params["freq"][1] * v) + params["phase"])
        mask = geometry.mask(side)
        return image + (params["amplitude"] * wave * mask)[..., None] * params["channels"]


class PatchSwapOperator(ForgeryOperator):
    name = "M2"
    family = "local-region"

    def draw_params(self, r):
        return {
            "size": r.uniform(0.5, 0.7, size=2),
            "alpha": r.uniform(0.6, 0.85),
            "jitter": r.uniform(-0.1, 0.1, size=4),
        }

    def apply(self, image, geometry, params):
        side = image.shape[0]
        ph = max(2, int(round(params["size"][0] * geometry.ay)))
        pw = max(2, int(round(params["size"][1] * geometry.ax)))
        j = params["jitter"]

        def box(cx, cy):
            top = int(np.clip(round(cy - ph / 2), 0, side - ph))
            left = int(np.clip(round(cx - pw / 2), 0, side - pw))
            return slice(top, top + ph), slice(left, left + pw)

        # upper-left (eye) patch against lower-right (mouth corner) patch
        a = box(geometry.cx - geometry.ax * (0.4 + j[0]), geometry.cy - geometry.ay * (0.3 + j[1]))
        b = box(geometry.cx + geometry.ax * (0.4 + j[2]), geometry.cy + geometry.ay * (0.4 + j[3]))
        out = image.copy()
        alpha = params["alpha"]
        out[a] = (1 - alpha) * image[a] + alpha * image[b]
        out[b] = (1 - alpha) * image[b] + alpha * image[a]
        return out


class ColorShiftOperator(ForgeryOperator):
    name = "M3"
    family = "global-signal"

    def draw_params(self, r):
        direction = r.choice([-1, 1], size=3)
        return {
            "gain": 1.0 + direction * r.uniform(0.15, 0.3, size=3),
            "bias": direction * r.uniform(0.02, 0.06, size=3),
            "extent": r.uniform(0.55, 0.75),
        }

    def apply(self, image, geometry, params):
        # shift an inner ellipse only, leaving a hard colour seam inside the face
        side = image.shape[0]
        mask = np.clip((params["extent"] - geometry.radius(side)) * geometry.ax + 0.5, 0.0, 1.0)[..., None]
        shifted = np.clip(params["gain"] * image + params["bias"], 0.0, 1.0)
        return (1 - mask) * image + mask * shifted


class BoundaryRingOperator(ForgeryOperator):
    name = "M4"
    family = "local-region"

    def draw_params(self, r):
        return {
            "width": r.uniform(0.08, 0.15),
            "sharpen": bool(r.random() < 0.5),
            "sigma": r.uniform(1.0, 2.0),
            "amount": r.uniform(1.0, 2.0),
        }

    def apply(self, image, geometry, params):
        side = image.shape[0]
        ring = np.exp(-((geometry.radius(side) - 1.0) / params["width"]) ** 2)[..., None]
        blurred = ndimage.gaussian_filter(image, sigma=(params["sigma"], params["sigma"], 0))
        if params["sharpen"]:
            processed = image + params["amount"] * (image - blurred)
        else:
            processed = blurred
        return (1 - ring) * image + ring * np.clip(processed, 0.0, 1.0)


class MosaicOperator(ForgeryOperator):
    name = "M5"
    family = "block-mosaic"

    def draw_params(self, r):
        return {"block": int(r.integers(4, 7)), "alpha": r.uniform(0.6, 0.9)}

    def apply(self, image, geometry, params):
        side = image.shape[0]
        block = params["block"]
        n = -(-side // block)
        padded = np.pad(image, ((0, n * block - side), (0, n * block - side), (0, 0)), mode="edge")
        means = padded.reshape(n, block, n, block, 3).mean(axis=(1, 3))
        mosaic = np.repeat(np.repeat(means, block, axis=0), block, axis=1)[:side, :side]
        mask = (geometry.mask(side) * params["alpha"])[..., None]
        return (1 - mask) * image + mask * mosaic


OPERATORS = {op.name: op for op in (WatermarkOperator(), PatchSwapOperator(), ColorShiftOperator(),
                                    BoundaryRingOperator(), MosaicOperator())}


def video_params(dataset_seed, video_id, side):
    return VideoParams.draw(derive_seed(dataset_seed, "video", video_id), side)


def frame_geometry(dataset_seed, video_id, frame_idx, side):
    """Face ellipse of a generated frame (shared by the pristine frame and its forgeries)"""
    return video_params(dataset_seed, video_id, side).geometry(frame_idx, side)


def to_uint8(image):
    return (np.clip(image, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def _render_video(dataset_seed, video_id, frames_per_video, side, methods, out_dir):
    params = video_params(dataset_seed, video_id, side)
    operator_params = {m: OPERATORS[m].draw_params(rng(dataset_seed, "operator", video_id, m))
                       for m in methods}
    rows = []
    for frame_idx in range(frames_per_video):
        pristine = render_pristine_frame(params, frame_idx, side)
        geometry = params.geometry(frame_idx, side)
        outputs = {settings.REAL: pristine}
        for m in methods:
            outputs[m] = OPERATORS[m](pristine, geometry, operator_params[m])
        for label, image in outputs.items():
            relative = Path(label) / video_id / f"{frame_idx}.png"
            target = out_dir / relative
            target.parent.mkdir(parents=True, exist_ok=True)
            Image.fromarray(to_uint8(image)).save(target, format="PNG")
            rows.append(ManifestRow(relative.as_posix(), video_id, frame_idx, label))
    return rows


def generate_synthetic_benchmark(seed, n_videos, frames_per_video, out_dir,
                                 side=settings.SYNTHETIC_IMAGE_SIDE, methods=settings.SYNTHETIC_METHODS,
                                 workers=1, callback=None):
    """
    Write the synthetic benchmark to disk.

    Args:
        seed: Dataset seed; per-video seeds are derived from (seed, video_id)
        n_videos: Number of pristine videos (>= 5)
        frames_per_video: Frames rendered per video (>= 1)
        out_dir: Output root, laid out as <method_label>/<video_id>/<frame_idx>.png
        side: Image side length in pixels
        methods: Forgery operators to apply to every pristine video
        workers: Videos rendered concurrently; output does not depend on it
        callback: Optional progress hook callback(status, message)

    Returns:
        DatasetManifest of everything written
    """
    if n_videos < 5:
        raise DatasetError(f"n_videos must be >= 5, got {n_videos}")
    if frames_per_video < 1:
        raise DatasetError(f"frames_per_video must be >= 1, got {frames_per_video}")
    if side < settings.MIN_IMAGE_SIDE:
        raise DatasetError(f"side must be >= {settings.MIN_IMAGE_SIDE}, got {side}")
    unknown = [m for m in methods if m not in OPERATORS]
    if unknown or not methods:
        raise DatasetError(f"Unknown synthetic methods {unknown}; available: {sorted(OPERATORS)}")

    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        marker = out_dir / ".write_check"
        marker.touch()
        marker.unlink()
    except OSError as exc:
        raise DatasetError(f"Cannot write to {out_dir}: {exc}") from exc

    if callback:
        callback("start", f"Generating {n_videos} videos x {frames_per_video} frames "
                          f"x {len(methods) + 1} classes into {out_dir}")

    video_ids = [f"{i:03d}" for i in range(n_videos)]

    def render(video_id):
        return _render_video(seed, video_id, frames_per_video, side, tuple(methods), out_dir)

    rows = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for video_rows in pool.map(render, video_ids):
                rows.extend(video_rows)
    else:
        for i, video_id in enumerate(video_ids):
            rows.extend(render(video_id))
            if callback:
                callback("progress", f"Rendered video {i + 1}/{n_videos}")

    rows.sort(key=lambda r: (r.method_label, r.video_id, r.frame_idx))
    manifest = DatasetManifest(root=out_dir, rows=tuple(rows), dataset_seed=seed, image_side=side)
    write_manifest(manifest, extra={
        "generator": "synthetic",
        "n_videos": n_videos,
        "frames_per_video": frames_per_video,
        "methods": list(methods),
        "families": {m: OPERATORS[m].family for m in methods},
    })
    logger.info("Synthetic benchmark written: %d files under %s", len(rows), out_dir)
    if callback:
        callback("success", f"Wrote {len(rows)} frames and manifest.csv")
    return manifest

