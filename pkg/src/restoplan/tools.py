"""The frozen restoration toolbox: denoise, deblur, and color correction.

Tools are deterministic classical operators with a uniform black-box
interface: image in, image out, both in [0, 1]. Strength is applied outside
the tools by the executor's residual scaling, never inside.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from ._filters import gaussian_blur
from .image_io import clamp01


class ConfigError(ValueError):
    """Invalid tool configuration."""


class ToolId(enum.IntEnum):
    DENOISE = 0
    DEBLUR = 1
    COLOR_CORRECT = 2

    @property
    def label(self) -> str:
        return self.name.lower()


TOOL_BY_LABEL = {t.label: t for t in ToolId}


@dataclass(frozen=True)
class DenoiseConfig:
    """Edge-preserving bilateral filter parameters."""

    kernel_radius: int = 3
    spatial_sigma: float = 2.0
    range_sigma: float = 0.1


@dataclass(frozen=True)
class DeblurConfig:
    """Unsharp-mask parameters: blur scale and boost amount."""

    blur_sigma: float = 1.5
    amount: float = 1.0


@dataclass(frozen=True)
class ColorCorrectConfig:
    """Gray-world normalization with clipped per-channel gains."""

    gain_clip: float = 4.0


@dataclass(frozen=True)
class ToolConfig:
    denoise: DenoiseConfig = DenoiseConfig()
    deblur: DeblurConfig = DeblurConfig()
    color_correct: ColorCorrectConfig = ColorCorrectConfig()

    def validate(self) -> "ToolConfig":
        d = self.denoise
        if not 1 <= d.kernel_radius <= 7:
            raise ConfigError(f"denoise kernel_radius must be in [1, 7], got {d.kernel_radius}")
        if d.spatial_sigma <= 0 or d.range_sigma <= 0:
            raise ConfigError("denoise sigmas must be positive")
        b = self.deblur
        if b.blur_sigma <= 0:
            raise ConfigError("deblur blur_sigma must be positive")
        if not 0 < b.amount <= 3:
            raise ConfigError(f"deblur amount must be in (0, 3], got {b.amount}")
        if self.color_correct.gain_clip < 1:
            raise ConfigError(f"gain_clip must be >= 1, got {self.color_correct.gain_clip}")
        return self

    def to_dict(self) -> dict:
        return {
            "denoise": {
                "kernel_radius": self.denoise.kernel_radius,
                "spatial_sigma": self.denoise.spatial_sigma,
                "range_sigma": self.denoise.range_sigma,
            },
            "deblur": {
                "blur_sigma": self.deblur.blur_sigma,
                "amount": self.deblur.amount,
            },
            "color_correct": {"gain_clip": self.color_correct.gain_clip},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ToolConfig":
        try:
            cfg = cls(
                denoise=DenoiseConfig(**data.get("denoise", {})),
                deblur=DeblurConfig(**data.get("deblur", {})),
                color_correct=ColorCorrectConfig(**data.get("color_correct", {})),
            )
        except TypeError as exc:
            raise ConfigError(f"malformed tool config: {exc}") from exc
        return cfg.validate()

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ToolConfig":
        return cls.from_dict(json.loads(text))

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:16]


def default_config() -> ToolConfig:
    return ToolConfig().validate()


def load_config(path) -> ToolConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return ToolConfig.from_json(fh.read())


def _bilateral(img: np.ndarray, cfg: DenoiseConfig) -> np.ndarray:
    r = cfg.kernel_radius
    inv_2ss = 1.0 / (2.0 * cfg.spatial_sigma**2)
    inv_2rs = 1.0 / (2.0 * cfg.range_sigma**2)
    h, w = img.shape[:2]
    padded = np.pad(img, ((r, r), (r, r), (0, 0)), mode="reflect")
    num = np.zeros_like(img)
    den = np.zeros((h, w))
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            spatial = np.exp(-(dy * dy + dx * dx) * inv_2ss)
            shifted = padded[r + dy : r + dy + h, r + dx : r + dx + w, :]
            # Joint range weight from the squared color distance over all channels.
            dist2 = ((shifted - img) ** 2).sum(axis=2)
            weight = spatial * np.exp(-dist2 * inv_2rs)
            num += weight[:, :, None] * shifted
            den += weight
    return clamp01(num / den[:, :, None])


def _unsharp(img: np.ndarray, cfg: DeblurConfig) -> np.ndarray:
    blurred = gaussian_blur(img, cfg.blur_sigma)
    return clamp01(img + cfg.amount * (img - blurred))


def _gray_world(img: np.ndarray, cfg: ColorCorrectConfig) -> np.ndarray:
    means = img.mean(axis=(0, 1))
    total = means.mean()
    if total < 1e-12:
        return img.copy()
    gains = np.clip(total / np.maximum(means, 1e-12), 1.0 / cfg.gain_clip, cfg.gain_clip)
    return clamp01(img * gains)


def apply_tool(tool: ToolId, img: np.ndarray, cfg: ToolConfig) -> np.ndarray:
    """Run one frozen tool on an image; output is clamped to [0, 1]."""
    tool = ToolId(tool)
    if tool is ToolId.DENOISE:
        return _bilateral(img, cfg.denoise)
    if tool is ToolId.DEBLUR:
        return _unsharp(img, cfg.deblur)
    return _gray_world(img, cfg.color_correct)
