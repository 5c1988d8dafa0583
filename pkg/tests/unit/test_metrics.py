"""Unit tests for image-quality and mask-quality metrics."""
import numpy as np
import pytest

from spair.core.errors import EmptyRegionError, ShapeError
from spair.services.metrics import (
    PSNR_CAP_DB,
    error_reduction,
    mask_prf,
    mse,
    psnr,
    quality_report,
    ssim,
    to_y,
)


class TestPsnr:
    """Tests for mse and psnr."""

    def test_mse_of_point_one_is_twenty_db(self):
        a = np.zeros((1, 3, 4, 4))
        assert psnr(a, a + 0.1) == pytest.approx(20.0)

    def test_identical_images_hit_sentinel(self, rng):
        a = rng.uniform_array((1, 3, 8, 8), 0, 1, np.float32)
        assert psnr(a, a.copy()) == PSNR_CAP_DB

    def test_region_restricts_pixels(self):
        a = np.zeros((1, 3, 4, 4))
        b = a.copy()
        b[:, :, :2] = 0.5
        region = np.zeros((1, 4, 4))
        region[0, 2:] = 1.0
        assert psnr(a, b, region=region) == PSNR_CAP_DB
        assert mse(a, b, region=1.0 - region) == pytest.approx(0.25)

    def test_mse_splits_over_complementary_regions(self, rng):
        a = rng.uniform_array((2, 3, 6, 6), 0, 1)
        b = rng.uniform_array((2, 3, 6, 6), 0, 1)
        region = (rng.random_array((2, 6, 6)) < 0.3).astype(np.float64)
        region[0, 0, 0], region[0, 0, 1] = 1.0, 0.0
        inside = region.sum()
        total = region.size
        combined = (mse(a, b, region=region) * inside
                    + mse(a, b, region=1.0 - region) * (total - inside)) / total
        assert combined == pytest.approx(mse(a, b), rel=1e-12)

    def test_empty_region_rejected(self):
        a = np.zeros((1, 3, 4, 4))
        with pytest.raises(EmptyRegionError):
            psnr(a, a, region=np.zeros((1, 4, 4)))

    def test_y_channel_of_gray_images(self):
        gray = np.full((1, 3, 4, 4), 0.4)
        np.testing.assert_allclose(to_y(gray), np.full((1, 1, 4, 4), 0.4))
        assert psnr(gray, gray + 0.1, y_channel=True) == pytest.approx(20.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            psnr(np.zeros((1, 3, 4, 4)), np.zeros((1, 3, 4, 5)))


class TestSsim:
    """Tests for ssim."""

    def test_identical_is_one(self, rng):
        a = rng.uniform_array((1, 3, 16, 16), 0, 1)
        assert ssim(a, a.copy()) == pytest.approx(1.0)

    def test_inverted_high_contrast_is_low(self, rng):
        a = np.where(rng.random_array((1, 3, 24, 24)) < 0.5, 0.1, 0.9)
        assert ssim(a, 1.0 - a) < 0.5

    def test_constant_offset_closed_form(self):
        """Only the luminance term differs from 1 for two flat images."""
        a = np.full((1, 1, 16, 16), 0.4)
        c1 = 0.01 ** 2
        expected = (2 * 0.4 * 0.5 + c1) / (0.4 ** 2 + 0.5 ** 2 + c1)
        assert ssim(a, a + 0.1) == pytest.approx(expected, abs=1e-6)

    def test_smaller_than_window_rejected(self):
        with pytest.raises(ShapeError):
            ssim(np.zeros((1, 3, 8, 8)), np.zeros((1, 3, 8, 8)))


class TestErrorReduction:
    """Tests for error_reduction."""

    def test_equal_scores_give_zero(self):
        assert error_reduction(30.0, 30.0, 0.9, 0.9) == pytest.approx((0.0, 0.0))

    def test_two_db_gain(self):
        rmse, _ = error_reduction(30.75, 32.91, 0.9, 0.9)
        assert rmse == pytest.approx(21.9, abs=0.2)

    def test_ten_db_gain(self):
        """Matches the closed form 1 - 10**(-10.43/20) = 69.9%, within 0.7 of the 69.3% reference."""
        rmse, _ = error_reduction(22.48, 32.91, 0.9, 0.9)
        assert rmse == pytest.approx(69.905, abs=0.01)
        assert rmse == pytest.approx(69.3, abs=0.7)

    def test_dssim_halved(self):
        _, dssim = error_reduction(30.0, 30.0, 0.8, 0.9)
        assert dssim == pytest.approx(50.0)


class TestMaskPrf:
    """Tests for mask_prf."""

    def test_perfect_prediction(self):
        gt = np.zeros((1, 8, 8))
        gt[0, 2:5, 3:6] = 1.0
        assert mask_prf(gt, gt.copy()) == (1.0, 1.0, 1.0)

    def test_empty_prediction(self):
        gt = np.zeros((1, 8, 8))
        gt[0, 1, 1] = 1.0
        assert mask_prf(np.zeros((1, 8, 8)), gt) == (0.0, 0.0, 0.0)

    def test_dilated_prediction(self):
        """A 4x4 blob dilated by one pixel: recall 1, precision 16/36."""
        gt = np.zeros((1, 16, 16))
        gt[0, 6:10, 6:10] = 1.0
        pred = np.zeros((1, 16, 16))
        pred[0, 5:11, 5:11] = 1.0
        precision, recall, f1 = mask_prf(pred, gt)
        assert recall == 1.0
        assert precision == pytest.approx(16 / 36)
        assert f1 == pytest.approx(32 / 52)

    def test_both_empty(self):
        empty = np.zeros((1, 4, 4))
        assert mask_prf(empty, empty) == (1.0, 1.0, 1.0)


class TestQualityReport:
    """Tests for quality_report."""

    def test_perfect_restoration(self, rng):
        clean = rng.uniform_array((1, 3, 16, 16), 0, 1, np.float32)
        gt = np.zeros((1, 16, 16), dtype=np.float32)
        gt[0, 4:8, 4:8] = 1.0
        report = quality_report(clean.copy(), clean, gt, gt)
        assert report.psnr_db == PSNR_CAP_DB
        assert report.ssim == pytest.approx(1.0)
        assert report.psnr_degraded_region_db == PSNR_CAP_DB
        assert report.mask_f1 == 1.0

    def test_empty_gt_falls_back_to_full_psnr(self, rng):
        clean = rng.uniform_array((1, 3, 16, 16), 0, 1)
        restored = np.clip(clean + 0.05, 0, 1)
        empty = np.zeros((1, 16, 16))
        report = quality_report(restored, clean, empty, empty)
        assert report.psnr_degraded_region_db == report.psnr_db
        assert report.psnr_clean_region_db == pytest.approx(report.psnr_db)
