"""
Test cases for frame-directory ingestion.
"""
import numpy as np
import pytest
from PIL import Image

from forensics.data.framedir import load_framedir, load_image
from forensics.errors import DatasetError


def _write_frame(root, method, video, frame, side=16, value=128):
    path = root / method / video / f"{frame}.png"
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.full((side, side, 3), value, dtype=np.uint8)).save(path)
    return path


def test_loads_a_frame_directory(tmp_path):
    for method in ("REAL", "DF"):
        for frame in range(2):
            _write_frame(tmp_path, method, "000", frame)
    manifest = load_framedir(tmp_path)
    assert len(manifest) == 4
    assert manifest.methods == ("DF",)
    assert manifest.image_side == 16
    assert manifest.dataset_seed is None


def test_reloads_the_synthetic_benchmark(tiny_benchmark):
    manifest = load_framedir(tiny_benchmark.root)
    assert manifest.rows == tiny_benchmark.rows
    assert manifest.dataset_seed == tiny_benchmark.dataset_seed


def test_unknown_method_directory_is_rejected_unless_declared(tmp_path):
    _write_frame(tmp_path, "REAL", "000", 0)
    _write_frame(tmp_path, "XYZ", "000", 0)
    with pytest.raises(DatasetError, match="XYZ"):
        load_framedir(tmp_path)
    assert load_framedir(tmp_path, extra_methods=("XYZ",)).methods == ("XYZ",)


def test_empty_directory_gives_empty_manifest(tmp_path, caplog):
    manifest = load_framedir(tmp_path)
    assert len(manifest) == 0
    assert "No frames" in caplog.text


def test_bad_files_are_named(tmp_path):
    bad = tmp_path / "REAL" / "000" / "0.png"
    bad.parent.mkdir(parents=True)
    bad.write_bytes(b"not a png")
    with pytest.raises(DatasetError, match="0.png"):
        load_framedir(tmp_path)


def test_mixed_sides_are_rejected(tmp_path):
    _write_frame(tmp_path, "M1", "000", 0, side=16)
    _write_frame(tmp_path, "REAL", "000", 0, side=24)
    with pytest.raises(DatasetError, match="side"):
        load_framedir(tmp_path)


def test_load_image_scales_to_unit_range(tmp_path):
    path = _write_frame(tmp_path, "REAL", "000", 0, value=255)
    image = load_image(path)
    assert image.dtype == np.float32
    assert image.shape == (16, 16, 3)
    assert np.allclose(image, 1.0)
