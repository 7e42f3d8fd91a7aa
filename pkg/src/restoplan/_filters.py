"""Separable filtering primitives shared by the tools, metrics, and feature code.

Everything operates on float64 arrays and is deterministic. Gaussian kernels
are truncated at ceil(3*sigma) and renormalized to unit sum.
"""

from __future__ import annotations

import numpy as np


def gaussian_kernel1d(sigma: float, radius: int | None = None) -> np.ndarray:
    """Unit-sum 1-D Gaussian taps."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if radius is None:
        radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    return kernel / kernel.sum()


def box_kernel1d(radius: int) -> np.ndarray:
    """Uniform 1-D averaging kernel of width 2*radius + 1."""
    width = 2 * radius + 1
    return np.full(width, 1.0 / width)


def correlate1d_reflect(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """Same-size 1-D correlation along `axis` with reflected borders."""
    radius = len(kernel) // 2
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(arr, pad, mode="reflect")
    windows = np.lib.stride_tricks.sliding_window_view(padded, len(kernel), axis=axis)
    return np.tensordot(windows, kernel, axes=([-1], [0]))


def separable_filter_reflect(arr: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Apply a 1-D kernel along both spatial axes (axis 0 then 1), reflect borders."""
    out = correlate1d_reflect(arr, kernel, axis=0)
    return correlate1d_reflect(out, kernel, axis=1)


def gaussian_blur(arr: np.ndarray, sigma: float, radius: int | None = None) -> np.ndarray:
    """Separable Gaussian blur of an HxW or HxWxC array."""
    return separable_filter_reflect(arr, gaussian_kernel1d(sigma, radius))


def box_mean(plane: np.ndarray, radius: int) -> np.ndarray:
    """Windowed mean over a (2r+1)^2 neighbourhood, reflect borders."""
    return separable_filter_reflect(plane, box_kernel1d(radius))


def window_corr_valid(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable windowed correlation of an HxW plane, fully covered positions only.

    Output shape is (H-K+1, W-K+1) for a K-tap kernel.
    """
    k = len(kernel)
    if plane.shape[0] < k or plane.shape[1] < k:
        raise ValueError("plane smaller than the correlation window")
    w0 = np.lib.stride_tricks.sliding_window_view(plane, k, axis=0)
    out = np.tensordot(w0, kernel, axes=([-1], [0]))
    w1 = np.lib.stride_tricks.sliding_window_view(out, k, axis=1)
    return np.tensordot(w1, kernel, axes=([-1], [0]))


def window_corr_adjoint(field: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Adjoint of window_corr_valid: scatter window values back over their pixels.

    Maps an (H-K+1, W-K+1) field of window-position values to an (H, W) pixel
    grid, weighting each contribution by the kernel.
    """
    grow = len(kernel) - 1
    padded = np.pad(field, ((grow, grow), (grow, grow)))
    return window_corr_valid(padded, kernel[::-1])
