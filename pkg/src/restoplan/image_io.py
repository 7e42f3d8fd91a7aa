"""PNG-backed pixel buffers: float64 RGB arrays with samples in [0, 1].

Loading maps 8-bit samples v to v/255 exactly; saving quantizes with
round-half-up. Arrays are treated as immutable values and no helper mutates
its input, so images are safe to share across workers.
"""

from __future__ import annotations

import numpy as np
from PIL import Image as _PILImage

MIN_SIDE = 8

# 8-bit PIL modes we accept; anything else (16-bit, 32-bit, float) is rejected.
_LOADABLE_MODES = {"1", "L", "LA", "P", "RGB", "RGBA"}


class ImageError(ValueError):
    """Unreadable, malformed, or undersized image data."""


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check shape (H, W, 3), finiteness, and the [0, 1] range; return as float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ImageError(f"expected an (H, W, 3) array, got shape {arr.shape}")
    if arr.shape[0] < MIN_SIDE or arr.shape[1] < MIN_SIDE:
        raise ImageError(f"image smaller than {MIN_SIDE}x{MIN_SIDE}: {arr.shape[:2]}")
    if not np.isfinite(arr).all():
        raise ImageError("image contains non-finite samples")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ImageError("image samples outside [0, 1]")
    return arr


def load_image(path) -> np.ndarray:
    """Decode an 8-bit RGB raster (PNG, PPM, ...) to a float64 array in [0, 1]."""
    try:
        with _PILImage.open(path) as pil:
            if pil.mode not in _LOADABLE_MODES:
                raise ImageError(f"unsupported mode/bit depth {pil.mode!r} in {path}")
            rgb = pil.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64) / 255.0
    except ImageError:
        raise
    except Exception as exc:
        raise ImageError(f"cannot read image {path}: {exc}") from exc
    return validate_image(arr)


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Round-half-up quantization of [0, 1] floats to uint8."""
    return np.floor(np.asarray(values, dtype=np.float64) * 255.0 + 0.5).astype(np.uint8)


def save_image(img: np.ndarray, path) -> None:
    """Write an image as an 8-bit RGB PNG."""
    arr = validate_image(img)
    try:
        _PILImage.fromarray(quantize_u8(arr), mode="RGB").save(path, format="PNG")
    except OSError as exc:
        raise ImageError(f"cannot write image {path}: {exc}") from exc


def load_gray(path) -> np.ndarray:
    """Decode an 8-bit grayscale PNG to an (H, W) float64 array in [0, 1]."""
    try:
        with _PILImage.open(path) as pil:
            if pil.mode not in _LOADABLE_MODES:
                raise ImageError(f"unsupported mode/bit depth {pil.mode!r} in {path}")
            arr = np.asarray(pil.convert("L"), dtype=np.float64) / 255.0
    except ImageError:
        raise
    except Exception as exc:
        raise ImageError(f"cannot read image {path}: {exc}") from exc
    return arr


def save_gray(plane: np.ndarray, path) -> None:
    """Write an (H, W) array of [0, 1] floats as an 8-bit grayscale PNG."""
    arr = np.asarray(plane, dtype=np.float64)
    if arr.ndim != 2:
        raise ImageError(f"expected an (H, W) array, got shape {arr.shape}")
    if not np.isfinite(arr).all() or arr.min() < 0.0 or arr.max() > 1.0:
        raise ImageError("plane samples outside [0, 1]")
    try:
        _PILImage.fromarray(quantize_u8(arr), mode="L").save(path, format="PNG")
    except OSError as exc:
        raise ImageError(f"cannot write image {path}: {exc}") from exc


def crop_center(img: np.ndarray, size: int) -> np.ndarray:
    """Centered size x size crop with floor offsets."""
    arr = np.asarray(img)
    h, w = arr.shape[:2]
    if size < 1:
        raise ImageError(f"crop size must be positive, got {size}")
    if size > h or size > w:
        raise ImageError(f"crop size {size} exceeds image dimensions {h}x{w}")
    top = (h - size) // 2
    left = (w - size) // 2
    return arr[top : top + size, left : left + size].copy()


def clamp01(img: np.ndarray) -> np.ndarray:
    """Clamp every sample to [0, 1]."""
    return np.clip(img, 0.0, 1.0)
