import numpy as np
import pytest
from PIL import Image as PILImage

from restoplan.image_io import (
    ImageError,
    clamp01,
    crop_center,
    load_gray,
    load_image,
    quantize_u8,
    save_gray,
    save_image,
    validate_image,
)


def _write_png(path, array_u8):
    PILImage.fromarray(array_u8, mode="RGB").save(path)


def test_load_zero_and_full_scale(tmp_path):
    zero = np.zeros((8, 8, 3), dtype=np.uint8)
    full = np.full((8, 8, 3), 255, dtype=np.uint8)
    _write_png(tmp_path / "zero.png", zero)
    _write_png(tmp_path / "full.png", full)
    assert np.all(load_image(tmp_path / "zero.png") == 0.0)
    assert np.all(load_image(tmp_path / "full.png") == 1.0)


def test_load_normalization_is_exact(tmp_path):
    arr = np.full((8, 8, 3), 128, dtype=np.uint8)
    _write_png(tmp_path / "mid.png", arr)
    assert np.all(load_image(tmp_path / "mid.png") == 128 / 255)


def test_save_round_half_up(tmp_path):
    img = np.full((8, 8, 3), 0.5)
    save_image(img, tmp_path / "half.png")
    stored = np.asarray(PILImage.open(tmp_path / "half.png"))
    assert np.all(stored == 128)
    save_image(np.ones((8, 8, 3)), tmp_path / "one.png")
    assert np.all(np.asarray(PILImage.open(tmp_path / "one.png")) == 255)


def test_quantize_u8_examples():
    assert quantize_u8(np.array([0.0, 0.5, 1.0])).tolist() == [0, 128, 255]


def test_load_save_round_trip(tmp_path, rng):
    src = rng.integers(0, 256, size=(16, 12, 3), dtype=np.uint8)
    _write_png(tmp_path / "src.png", src)
    first = load_image(tmp_path / "src.png")
    save_image(first, tmp_path / "copy.png")
    again = load_image(tmp_path / "copy.png")
    assert np.array_equal(first, again)


def test_alpha_is_discarded(tmp_path):
    rgba = np.zeros((8, 8, 4), dtype=np.uint8)
    rgba[:, :, 0] = 200
    rgba[:, :, 3] = 7
    PILImage.fromarray(rgba, mode="RGBA").save(tmp_path / "a.png")
    img = load_image(tmp_path / "a.png")
    assert img.shape == (8, 8, 3)
    assert np.all(img[:, :, 0] == 200 / 255)


def test_load_rejects_16bit(tmp_path):
    deep = PILImage.new("I;16", (16, 16))
    deep.save(tmp_path / "deep.png")
    with pytest.raises(ImageError, match="unsupported"):
        load_image(tmp_path / "deep.png")


def test_load_rejects_small_and_missing(tmp_path):
    _write_png(tmp_path / "tiny.png", np.zeros((4, 4, 3), dtype=np.uint8))
    with pytest.raises(ImageError):
        load_image(tmp_path / "tiny.png")
    with pytest.raises(ImageError):
        load_image(tmp_path / "nope.png")


def test_ppm_is_loadable(tmp_path):
    arr = np.full((8, 8, 3), 10, dtype=np.uint8)
    PILImage.fromarray(arr, mode="RGB").save(tmp_path / "img.ppm")
    assert np.all(load_image(tmp_path / "img.ppm") == 10 / 255)


@pytest.mark.parametrize(
    "size,crop,expect",
    [
        (4, 2, (1, 3)),  # rows/cols {1, 2}
        (5, 3, (1, 4)),  # rows/cols {1, 2, 3}
    ],
)
def test_crop_center_offsets(size, crop, expect):
    img = np.arange(size * size * 3, dtype=np.float64).reshape(size, size, 3)
    img = img / img.max()
    out = crop_center(img, crop)
    assert np.array_equal(out, img[expect[0] : expect[1], expect[0] : expect[1]])


def test_crop_center_identity_and_idempotence(clean64):
    assert np.array_equal(crop_center(clean64, 64), clean64)
    once = crop_center(clean64, 32)
    assert np.array_equal(crop_center(once, 32), once)


def test_crop_center_too_large(clean64):
    with pytest.raises(ImageError):
        crop_center(clean64, 65)


def test_clamp01():
    arr = np.array([[[-0.2, 0.7, 1.3]] * 8] * 8)
    out = clamp01(arr)
    assert np.all(out[:, :, 0] == 0.0)
    assert np.all(out[:, :, 1] == 0.7)
    assert np.all(out[:, :, 2] == 1.0)
    assert np.array_equal(clamp01(out), out)


def test_clamp01_order_preserving(rng):
    a = rng.uniform(size=(8, 8, 3))
    b = np.minimum(a + rng.uniform(0, 0.2, size=a.shape), 1.0)
    assert np.all(clamp01(a) <= clamp01(b))


def test_validate_rejects_bad_shapes_and_ranges():
    with pytest.raises(ImageError):
        validate_image(np.zeros((8, 8)))
    with pytest.raises(ImageError):
        validate_image(np.full((8, 8, 3), 1.5))
    with pytest.raises(ImageError):
        validate_image(np.full((8, 8, 3), np.nan))


def test_gray_round_trip(tmp_path, rng):
    plane = rng.uniform(size=(9, 13))
    save_gray(plane, tmp_path / "g.png")
    back = load_gray(tmp_path / "g.png")
    assert back.shape == plane.shape
    assert np.max(np.abs(back - plane)) <= 0.5 / 255 + 1e-12
