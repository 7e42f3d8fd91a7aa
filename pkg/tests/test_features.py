import numpy as np
import pytest

from restoplan._filters import gaussian_blur
from restoplan.features import (
    PIXEL_DIM,
    POOLED_DIM,
    POOLED_NAMES,
    extract_features,
)

IDX = {name: i for i, name in enumerate(POOLED_NAMES)}


def test_shapes(clean64):
    feats = extract_features(clean64)
    assert feats.pooled.shape == (POOLED_DIM,)
    assert feats.per_pixel.shape == (64, 64, PIXEL_DIM)
    assert np.isfinite(feats.pooled).all()
    assert np.isfinite(feats.per_pixel).all()


def test_constant_image_statistics_vanish():
    feats = extract_features(np.full((32, 32, 3), 0.5))
    assert feats.pooled[IDX["noise_sigma_mad"]] == pytest.approx(0.0, abs=1e-12)
    assert feats.pooled[IDX["noise_response"]] == pytest.approx(0.0, abs=1e-12)
    assert feats.pooled[IDX["gradient_magnitude"]] == pytest.approx(0.0, abs=1e-12)
    assert feats.pooled[IDX["highfreq_energy_ratio"]] == pytest.approx(0.0, abs=1e-12)
    for channel in ("color_dev_r", "color_dev_g", "color_dev_b"):
        assert feats.pooled[IDX[channel]] == pytest.approx(0.0, abs=1e-12)
    assert feats.pooled[IDX["luminance"]] == pytest.approx(0.5, abs=1e-12)
    assert feats.pooled[IDX["luminance_std"]] == pytest.approx(0.0, abs=1e-12)


def test_noise_sigma_estimate_is_calibrated():
    # flat fixture + i.i.d. Gaussian noise: the MAD-Laplacian estimate must
    # land within 25% of the true sigma
    rng = np.random.default_rng(5)
    for sigma in (0.02, 0.05, 0.08):
        img = np.clip(0.5 + rng.normal(0, sigma, size=(64, 64, 3)), 0, 1)
        estimate = extract_features(img).pooled[IDX["noise_sigma_mad"]]
        assert abs(estimate - sigma) <= 0.25 * sigma


def test_red_tint_sign_pattern(clean64):
    tinted = np.clip(clean64 + np.array([0.2, 0.0, 0.0]), 0, 1)
    pooled = extract_features(tinted).pooled
    assert pooled[IDX["color_dev_r"]] > 0
    assert pooled[IDX["color_dev_g"]] < 0
    assert pooled[IDX["color_dev_b"]] < 0


def test_color_cast_equals_channel_mean_minus_global(clean64):
    pooled = extract_features(clean64).pooled
    means = clean64.mean(axis=(0, 1))
    expected = means - clean64.mean()
    got = np.array([pooled[IDX["color_dev_r"]], pooled[IDX["color_dev_g"]], pooled[IDX["color_dev_b"]]])
    assert np.allclose(got, expected, atol=1e-12)


def test_blur_lowers_sharpness_features(clean64):
    sharp = extract_features(clean64).pooled
    blurred = extract_features(gaussian_blur(clean64, 2.0)).pooled
    assert blurred[IDX["gradient_magnitude"]] < sharp[IDX["gradient_magnitude"]]
    assert blurred[IDX["highfreq_energy_ratio"]] < sharp[IDX["highfreq_energy_ratio"]]


def test_noise_raises_noise_features(clean64, noisy64):
    quiet = extract_features(clean64).pooled
    noisy = extract_features(noisy64).pooled
    assert noisy[IDX["noise_sigma_mad"]] > quiet[IDX["noise_sigma_mad"]]
    assert noisy[IDX["noise_response"]] > quiet[IDX["noise_response"]]


def test_pooled_matches_plane_means(clean64):
    feats = extract_features(clean64)
    assert np.allclose(feats.pooled[:PIXEL_DIM], feats.per_pixel.mean(axis=(0, 1)), atol=1e-12)


def test_deterministic(clean64):
    a = extract_features(clean64)
    b = extract_features(clean64)
    assert np.array_equal(a.pooled, b.pooled)
    assert np.array_equal(a.per_pixel, b.per_pixel)
