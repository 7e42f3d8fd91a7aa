"""Full-reference quality metrics and training losses.

PSNR assumes unit dynamic range. SSIM uses the standard 11x11 Gaussian window
(sigma = 1.5, K1 = 0.01, K2 = 0.03) with weighted population statistics and is
averaged per channel over fully covered window positions only. The SSIM
gradient is analytic so the reconstruction loss can drive training directly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._filters import gaussian_kernel1d, window_corr_adjoint, window_corr_valid

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2  # (K1 * L)^2 with L = 1
SSIM_C2 = 0.03**2
PSNR_CAP_DB = 100.0
_PSNR_MSE_FLOOR = 1e-10
PROB_FLOOR = 1e-12

_WINDOW_KERNEL = gaussian_kernel1d(SSIM_SIGMA, radius=SSIM_WINDOW // 2)


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    l1: float

    def to_dict(self) -> dict:
        return {"psnr": float(self.psnr), "ssim": float(self.ssim), "l1": float(self.l1)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def mse(a: np.ndarray, b: np.ndarray) -> float:
    _check_shapes(a, b)
    return float(np.mean((a - b) ** 2))


def mean_l1(a: np.ndarray, b: np.ndarray) -> float:
    _check_shapes(a, b)
    return float(np.mean(np.abs(a - b)))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/mse), capped at 100 dB for near-zero error."""
    m = mse(a, b)
    if m < _PSNR_MSE_FLOOR:
        return PSNR_CAP_DB
    return float(10.0 * math.log10(1.0 / m))


def _ssim_channel_stats(x: np.ndarray, y: np.ndarray):
    """Weighted window statistics and the per-position SSIM factors for one plane."""
    k = _WINDOW_KERNEL
    mu_x = window_corr_valid(x, k)
    mu_y = window_corr_valid(y, k)
    var_x = window_corr_valid(x * x, k) - mu_x * mu_x
    var_y = window_corr_valid(y * y, k) - mu_y * mu_y
    cov = window_corr_valid(x * y, k) - mu_x * mu_y
    a1 = 2.0 * mu_x * mu_y + SSIM_C1
    a2 = 2.0 * cov + SSIM_C2
    b1 = mu_x * mu_x + mu_y * mu_y + SSIM_C1
    b2 = var_x + var_y + SSIM_C2
    s = (a1 * a2) / (b1 * b2)
    return mu_x, mu_y, a1, a2, b1, b2, s


def _require_ssim_size(a: np.ndarray) -> None:
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(
            f"image too small for the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window: "
            f"{a.shape[0]}x{a.shape[1]}"
        )


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM index over channels and valid window positions."""
    _check_shapes(a, b)
    _require_ssim_size(a)
    total = 0.0
    for c in range(a.shape[2]):
        *_, s = _ssim_channel_stats(a[:, :, c], b[:, :, c])
        total += float(s.mean())
    return total / a.shape[2]


def ssim_grad(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """SSIM and its gradient with respect to the first argument.

    The gradient of the per-window index S = (A1*A2)/(B1*B2) with respect to a
    window pixel x_i is

        w_i * 2 * [ mu_y*A2/(B1*B2) + (y_i - mu_y)*A1/(B1*B2)
                    - mu_x*S/B1 - (x_i - mu_x)*S/B2 ],

    scattered back over pixels by the window adjoint and averaged over window
    positions and channels.
    """
    _check_shapes(a, b)
    _require_ssim_size(a)
    k = _WINDOW_KERNEL
    n_pos = (a.shape[0] - SSIM_WINDOW + 1) * (a.shape[1] - SSIM_WINDOW + 1)
    channels = a.shape[2]
    grad = np.zeros_like(a)
    total = 0.0
    for c in range(channels):
        x = a[:, :, c]
        y = b[:, :, c]
        mu_x, mu_y, a1, a2, b1, b2, s = _ssim_channel_stats(x, y)
        total += float(s.mean())
        inv_b1b2 = 1.0 / (b1 * b2)
        coef_const = 2.0 * (mu_y * a2 * inv_b1b2 - mu_x * s / b1)
        coef_y = 2.0 * a1 * inv_b1b2  # multiplies (y_i - mu_y)
        coef_x = 2.0 * s / b2  # multiplies -(x_i - mu_x)
        g = (
            window_corr_adjoint(coef_const, k)
            + y * window_corr_adjoint(coef_y, k)
            - window_corr_adjoint(coef_y * mu_y, k)
            - x * window_corr_adjoint(coef_x, k)
            + window_corr_adjoint(coef_x * mu_x, k)
        )
        grad[:, :, c] = g / (n_pos * channels)
    return total / channels, grad


def recon_loss(out: np.ndarray, gt: np.ndarray, mu: float = 0.1) -> float:
    """Composite reconstruction loss: mean L1 plus mu * (1 - SSIM)."""
    return mean_l1(out, gt) + mu * (1.0 - ssim(out, gt))


def recon_loss_grad(out: np.ndarray, gt: np.ndarray, mu: float = 0.1) -> tuple[float, np.ndarray]:
    """Reconstruction loss and its gradient with respect to `out`."""
    _check_shapes(out, gt)
    l1_val = float(np.mean(np.abs(out - gt)))
    grad = np.sign(out - gt) / out.size
    if mu != 0.0:
        ssim_val, ssim_g = ssim_grad(out, gt)
        return l1_val + mu * (1.0 - ssim_val), grad - mu * ssim_g
    return l1_val, grad


def cross_entropy(probs: np.ndarray, target: int) -> float:
    """Negative log-probability of the target category."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"expected a probability vector, got shape {p.shape}")
    if not 0 <= target < len(p):
        raise ValueError(f"target {target} out of range for {len(p)} categories")
    if abs(float(p.sum()) - 1.0) > 1e-6:
        raise ValueError(f"probabilities sum to {p.sum()}, not 1")
    return float(-np.log(max(float(p[target]), PROB_FLOOR)))


def report(a: np.ndarray, b: np.ndarray) -> MetricReport:
    """PSNR/SSIM/L1 of `a` against reference `b`."""
    return MetricReport(psnr=psnr(a, b), ssim=ssim(a, b), l1=mean_l1(a, b))
