import math

import numpy as np
import pytest

from restoplan import metrics as M


def const_img(value, shape=(16, 16, 3)):
    return np.full(shape, float(value))


class TestMseAndPsnr:
    def test_mse_examples(self):
        assert M.mse(const_img(0), const_img(0)) == 0.0
        assert M.mse(const_img(0), const_img(0.5)) == pytest.approx(0.25, abs=1e-12)
        assert M.mse(const_img(0), const_img(1)) == pytest.approx(1.0, abs=1e-12)

    def test_mse_dimension_mismatch(self):
        with pytest.raises(ValueError):
            M.mse(const_img(0), const_img(0, shape=(16, 8, 3)))

    def test_psnr_cap_on_identical(self):
        assert M.psnr(const_img(0.3), const_img(0.3)) == 100.0

    def test_psnr_closed_forms(self):
        # mse 0.01 -> 10*log10(100) = 20 dB
        a = const_img(0.0)
        b = const_img(0.1)
        assert M.psnr(a, b) == pytest.approx(20.0, abs=1e-9)
        assert M.psnr(const_img(0), const_img(0.5)) == pytest.approx(10 * math.log10(4), abs=1e-9)

    def test_psnr_strictly_decreasing_in_mse(self):
        values = [M.psnr(const_img(0), const_img(v)) for v in (0.05, 0.1, 0.2, 0.4, 0.8)]
        assert all(a > b for a, b in zip(values, values[1:]))


class TestSsim:
    def test_identity(self, rng):
        x = rng.uniform(size=(20, 24, 3))
        assert abs(M.ssim(x, x) - 1.0) <= 1e-9

    def test_symmetry(self, rng):
        a = rng.uniform(size=(16, 16, 3))
        b = rng.uniform(size=(16, 16, 3))
        assert abs(M.ssim(a, b) - M.ssim(b, a)) <= 1e-9

    def test_constant_zero_variance_closed_form(self):
        # mu_x = 0, mu_y = 1: S = C1 / (1 + C1) with all variance terms cancelling
        expected = M.SSIM_C1 / (1.0 + M.SSIM_C1)
        assert M.ssim(const_img(0), const_img(1)) == pytest.approx(expected, abs=1e-9)

    def test_constant_half_vs_point_six(self):
        # zero-variance closed form evaluated directly as the oracle
        expected = (2 * 0.5 * 0.6 + M.SSIM_C1) / (0.5**2 + 0.6**2 + M.SSIM_C1)
        got = M.ssim(const_img(0.5), const_img(0.6))
        assert got == pytest.approx(expected, abs=1e-9)
        assert got == pytest.approx(0.98361, abs=1e-5)

    def test_matches_reference_implementation(self, rng):
        skimage = pytest.importorskip("skimage.metrics")
        a = rng.uniform(size=(40, 32, 3))
        b = np.clip(a + rng.normal(0, 0.08, a.shape), 0, 1)
        expected = skimage.structural_similarity(
            a,
            b,
            win_size=11,
            gaussian_weights=True,
            sigma=1.5,
            use_sample_covariance=False,
            data_range=1.0,
            channel_axis=2,
        )
        assert M.ssim(a, b) == pytest.approx(expected, abs=1e-10)

    def test_too_small_image_raises(self):
        with pytest.raises(ValueError, match="too small"):
            M.ssim(const_img(0, (8, 8, 3)), const_img(0, (8, 8, 3)))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            M.ssim(const_img(0), const_img(0, (16, 20, 3)))


class TestSsimGrad:
    def test_matches_finite_differences(self, rng):
        x = rng.uniform(0.2, 0.8, size=(14, 15, 3))
        y = np.clip(x + rng.normal(0, 0.1, x.shape), 0, 1)
        _, grad = M.ssim_grad(x, y)
        eps = 1e-6
        for _ in range(16):
            i, j, c = rng.integers(14), rng.integers(15), rng.integers(3)
            xp = x.copy()
            xp[i, j, c] += eps
            xm = x.copy()
            xm[i, j, c] -= eps
            fd = (M.ssim(xp, y) - M.ssim(xm, y)) / (2 * eps)
            assert grad[i, j, c] == pytest.approx(fd, rel=2e-4, abs=1e-9)

    def test_zero_at_identity(self, rng):
        x = rng.uniform(0.3, 0.7, size=(16, 16, 3))
        val, grad = M.ssim_grad(x, x)
        assert val == pytest.approx(1.0, abs=1e-12)
        # SSIM is maximal at x == y, so the gradient must vanish
        assert np.max(np.abs(grad)) < 1e-10


class TestReconLoss:
    def test_zero_when_equal(self, rng):
        x = rng.uniform(size=(16, 16, 3))
        assert M.recon_loss(x, x) == pytest.approx(0.0, abs=1e-9)

    def test_constant_closed_form(self):
        ssim_const = (2 * 0.5 * 0.6 + M.SSIM_C1) / (0.5**2 + 0.6**2 + M.SSIM_C1)
        expected = 0.1 + 0.1 * (1 - ssim_const)
        got = M.recon_loss(const_img(0.6), const_img(0.5), mu=0.1)
        assert got == pytest.approx(expected, abs=1e-9)
        assert got == pytest.approx(0.101639, abs=1e-6)

    def test_mu_zero_reduces_to_l1(self, rng):
        a = rng.uniform(size=(16, 16, 3))
        b = rng.uniform(size=(16, 16, 3))
        assert M.recon_loss(a, b, mu=0.0) == pytest.approx(M.mean_l1(a, b), abs=1e-12)

    def test_nonnegative_and_zero_iff_equal(self, rng):
        a = rng.uniform(size=(16, 16, 3))
        b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)
        assert M.recon_loss(a, b) > 0
        assert M.recon_loss(a, a) <= 1e-9

    def test_grad_matches_finite_differences(self, rng):
        out = rng.uniform(0.2, 0.8, size=(13, 14, 3))
        gt = np.clip(out + rng.normal(0, 0.1, out.shape), 0, 1)
        loss, grad = M.recon_loss_grad(out, gt)
        assert loss == pytest.approx(M.recon_loss(out, gt), abs=1e-12)
        eps = 1e-6
        for _ in range(10):
            i, j, c = rng.integers(13), rng.integers(14), rng.integers(3)
            op = out.copy()
            op[i, j, c] += eps
            om = out.copy()
            om[i, j, c] -= eps
            fd = (M.recon_loss(op, gt) - M.recon_loss(om, gt)) / (2 * eps)
            assert grad[i, j, c] == pytest.approx(fd, rel=2e-4, abs=1e-9)


class TestCrossEntropy:
    def test_certain_prediction(self):
        probs = np.zeros(16)
        probs[3] = 1.0
        assert M.cross_entropy(probs, 3) == pytest.approx(0.0, abs=1e-9)

    def test_uniform_sixteen(self):
        probs = np.full(16, 1 / 16)
        assert M.cross_entropy(probs, 5) == pytest.approx(math.log(16), abs=1e-9)

    def test_half(self):
        probs = np.array([0.5, 0.5])
        assert M.cross_entropy(probs, 0) == pytest.approx(math.log(2), abs=1e-9)

    def test_strictly_decreasing_in_target_prob(self):
        losses = []
        for p in (0.1, 0.3, 0.5, 0.9):
            probs = np.array([p, 1 - p])
            losses.append(M.cross_entropy(probs, 0))
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_errors(self):
        with pytest.raises(ValueError, match="out of range"):
            M.cross_entropy(np.full(4, 0.25), 4)
        with pytest.raises(ValueError, match="sum"):
            M.cross_entropy(np.full(4, 0.3), 0)


def test_metric_report_flat_json(rng):
    a = rng.uniform(size=(16, 16, 3))
    report = M.report(a, a)
    assert report.to_dict() == {"psnr": 100.0, "ssim": 1.0, "l1": 0.0}
    assert report.to_json() == '{"l1": 0.0, "psnr": 100.0, "ssim": 1.0}'
