"""Handcrafted degradation statistics standing in for a learned feature backbone.

Eight per-pixel planes describe local noise, sharpness, contrast, color
deviation, and luminance; the pooled vector is their spatial means plus three
global-only statistics (a MAD-based noise sigma estimate, the high-frequency
energy ratio, and the luminance standard deviation).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ._filters import box_mean, gaussian_blur

# MAD -> sigma for the 4-neighbour Laplacian: 1/0.6745 normalizes the MAD of a
# Gaussian to its sigma, 1/sqrt(20) undoes the kernel's variance gain
# (sum of squared taps = 4*1 + 16 = 20).
LAPLACIAN_MAD_SCALE = 1.0 / 0.6745 / np.sqrt(20.0)

PLANE_NAMES = (
    "noise_response",  # |Laplacian| of luminance, scaled to sigma units
    "gradient_magnitude",
    "highfreq_residual",  # |luminance - gaussian(luminance)|
    "local_contrast",  # 5x5 windowed std of luminance
    "color_dev_r",  # channel minus per-pixel channel mean
    "color_dev_g",
    "color_dev_b",
    "luminance",
)
GLOBAL_NAMES = ("noise_sigma_mad", "highfreq_energy_ratio", "luminance_std")
POOLED_NAMES = PLANE_NAMES + GLOBAL_NAMES

PIXEL_DIM = len(PLANE_NAMES)
POOLED_DIM = len(POOLED_NAMES)

FEATURE_SPEC = "degradation-stats-v1:" + ",".join(POOLED_NAMES)
FEATURE_SPEC_HASH = hashlib.sha256(FEATURE_SPEC.encode("utf-8")).hexdigest()[:16]

_HIGHFREQ_SIGMA = 1.0
_CONTRAST_RADIUS = 2


@dataclass(frozen=True)
class FeatureSet:
    pooled: np.ndarray  # (POOLED_DIM,)
    per_pixel: np.ndarray  # (H, W, PIXEL_DIM)


def _laplacian_reflect(plane: np.ndarray) -> np.ndarray:
    padded = np.pad(plane, 1, mode="reflect")
    return (
        padded[:-2, 1:-1]
        + padded[2:, 1:-1]
        + padded[1:-1, :-2]
        + padded[1:-1, 2:]
        - 4.0 * plane
    )


def extract_features(img: np.ndarray) -> FeatureSet:
    """Deterministic degradation statistics for one image."""
    luminance = img.mean(axis=2)
    # per-channel Laplacians: luminance averaging would shrink i.i.d. channel
    # noise by sqrt(3) and bias the sigma estimate low
    laps = np.stack([_laplacian_reflect(img[:, :, c]) for c in range(3)], axis=-1)
    noise_response = np.abs(laps).mean(axis=2) * LAPLACIAN_MAD_SCALE

    gy, gx = np.gradient(luminance)
    gradient_magnitude = np.sqrt(gx * gx + gy * gy)

    lowpass = gaussian_blur(luminance, _HIGHFREQ_SIGMA)
    highfreq = np.abs(luminance - lowpass)

    mean_local = box_mean(luminance, _CONTRAST_RADIUS)
    mean_sq = box_mean(luminance * luminance, _CONTRAST_RADIUS)
    local_contrast = np.sqrt(np.maximum(mean_sq - mean_local * mean_local, 0.0))

    color_dev = img - luminance[:, :, None]

    per_pixel = np.stack(
        [
            noise_response,
            gradient_magnitude,
            highfreq,
            local_contrast,
            color_dev[:, :, 0],
            color_dev[:, :, 1],
            color_dev[:, :, 2],
            luminance,
        ],
        axis=-1,
    )

    channel_mads = [
        np.median(np.abs(laps[:, :, c] - np.median(laps[:, :, c]))) for c in range(3)
    ]
    noise_sigma_mad = float(np.mean(channel_mads)) * LAPLACIAN_MAD_SCALE
    total_energy = float(np.mean((luminance - luminance.mean()) ** 2))
    highfreq_ratio = float(np.mean(highfreq**2)) / (total_energy + 1e-12)
    pooled = np.concatenate(
        [
            per_pixel.mean(axis=(0, 1)),
            [noise_sigma_mad, highfreq_ratio, float(luminance.std())],
        ]
    )
    return FeatureSet(pooled=pooled, per_pixel=per_pixel)
