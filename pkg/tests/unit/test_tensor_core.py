"""Unit tests for the dense tensor substrate."""
import math

import numpy as np
import pytest

from spair.core.errors import EmptyRegionError, ShapeError
from spair.ops.oracles import conv2d_loop, masked_stats_loop
from spair.ops.tensor_core import (
    EPS,
    ConvParams,
    conv2d_dense,
    downsample_mask,
    masked_stats,
    softmax,
)
from tests.helpers import random_mask


class TestConv2dDense:
    """Tests for conv2d_dense."""

    def test_all_ones_counts_padded_taps(self):
        """Centre sees nine ones, corners four."""
        x = np.ones((1, 1, 3, 3))
        params = ConvParams(np.ones((1, 1, 3, 3)), np.zeros(1), stride=1, padding=1)
        out = conv2d_dense(x, params)
        assert out[0, 0, 1, 1] == 9.0
        assert out[0, 0, 0, 0] == 4.0
        assert out[0, 0, 2, 2] == 4.0

    def test_identity_kernel(self):
        """A 1x1 unit kernel returns the input."""
        x = np.arange(18, dtype=np.float64).reshape(1, 2, 3, 3)
        weights = np.eye(2).reshape(2, 2, 1, 1)
        out = conv2d_dense(x, ConvParams(weights, np.zeros(2)))
        np.testing.assert_array_equal(out, x)

    def test_matches_loop_oracle(self, rng):
        """Random f64 case agrees with the scalar loops."""
        x = rng.uniform_array((1, 2, 5, 5), -1, 1)
        w = rng.uniform_array((3, 2, 3, 3), -1, 1)
        b = rng.uniform_array((3,), -1, 1)
        out = conv2d_dense(x, ConvParams(w, b, stride=1, padding=1))
        np.testing.assert_allclose(out, conv2d_loop(x, w, b, 1, 1), atol=1e-12, rtol=0)

    def test_strided_matches_loop_oracle(self, rng):
        """Stride 2 agrees with the scalar loops."""
        x = rng.uniform_array((2, 3, 8, 8), -1, 1)
        w = rng.uniform_array((4, 3, 3, 3), -1, 1)
        b = rng.uniform_array((4,), -1, 1)
        out = conv2d_dense(x, ConvParams(w, b, stride=2, padding=1))
        assert out.shape == (2, 4, 4, 4)
        np.testing.assert_allclose(out, conv2d_loop(x, w, b, 2, 1), atol=1e-12, rtol=0)

    def test_channel_mismatch_rejected(self):
        """Kernel input channels must match the tensor."""
        params = ConvParams(np.ones((1, 2, 3, 3)), np.zeros(1))
        with pytest.raises(ShapeError):
            conv2d_dense(np.ones((1, 3, 4, 4)), params)

    def test_even_kernel_rejected(self):
        """Kernel size must be odd."""
        with pytest.raises(ShapeError):
            ConvParams(np.ones((1, 1, 2, 2)), np.zeros(1))

    def test_integer_dtype_rejected(self):
        """Only float32 and float64 tensors are accepted."""
        with pytest.raises(ShapeError):
            conv2d_dense(np.ones((1, 1, 3, 3), dtype=np.int32), ConvParams.same(np.ones((1, 1, 3, 3)), np.zeros(1)))

    def test_linear_in_input(self, rng):
        """With zero bias, conv(aX + bY) = a conv(X) + b conv(Y)."""
        params = ConvParams.same(rng.uniform_array((3, 2, 3, 3), -1, 1), np.zeros(3))
        x = rng.uniform_array((2, 2, 6, 6), -1, 1)
        y = rng.uniform_array((2, 2, 6, 6), -1, 1)
        a, b = 1.7, -0.6
        combined = conv2d_dense(a * x + b * y, params)
        separate = a * conv2d_dense(x, params) + b * conv2d_dense(y, params)
        np.testing.assert_allclose(combined, separate, atol=1e-10, rtol=0)


class TestMaskedStats:
    """Tests for masked_stats."""

    def test_hand_example(self):
        """[1,2,3,4] over mask [1,1,0,0] gives mean 1.5 and std sqrt(0.25 + eps)."""
        x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 1, 1, 4)
        mask = np.array([1.0, 1.0, 0.0, 0.0]).reshape(1, 1, 4)
        mean, std = masked_stats(x, mask)
        assert mean[0, 0] == pytest.approx(1.5)
        assert std[0, 0] == pytest.approx(math.sqrt(0.25 + EPS))

    def test_constant_input(self):
        """Zero variance leaves std at sqrt(eps)."""
        x = np.full((1, 2, 4, 4), 0.7)
        mask = np.zeros((1, 4, 4))
        mask[0, 1:3, 1:3] = 1.0
        mean, std = masked_stats(x, mask)
        np.testing.assert_allclose(mean, 0.7)
        np.testing.assert_allclose(std, math.sqrt(EPS))

    def test_full_mask_equals_unmasked(self, rng):
        """All-ones mask reduces to plain per-channel statistics."""
        x = rng.uniform_array((2, 3, 4, 5), -1, 1)
        mean, std = masked_stats(x, np.ones((2, 4, 5)))
        np.testing.assert_allclose(mean, x.mean(axis=(2, 3)), atol=1e-12)
        np.testing.assert_allclose(std, np.sqrt(x.var(axis=(2, 3)) + EPS), atol=1e-12)

    def test_matches_loop_oracle(self, rng):
        """Random mask agrees with the fsum loops."""
        x = rng.uniform_array((2, 3, 6, 6), -1, 1)
        mask = (rng.random_array((2, 6, 6)) < 0.4).astype(np.float64)
        mask[:, 0, 0] = 1.0
        mean, std = masked_stats(x, mask)
        ref_mean, ref_std = masked_stats_loop(x, mask)
        np.testing.assert_allclose(mean, ref_mean, atol=1e-12)
        np.testing.assert_allclose(std, ref_std, atol=1e-12)

    def test_empty_region_rejected(self):
        """An all-zero mask has no statistics."""
        with pytest.raises(EmptyRegionError):
            masked_stats(np.ones((1, 1, 2, 2)), np.zeros((1, 2, 2)))

    def test_non_binary_mask_rejected(self):
        """Mask entries must be exactly 0 or 1."""
        with pytest.raises(ShapeError):
            masked_stats(np.ones((1, 1, 2, 2)), np.full((1, 2, 2), 0.5))

    def test_recentred_region_has_zero_mean(self, rng):
        """Subtracting the masked mean inside the region leaves a zero masked mean."""
        x = rng.uniform_array((2, 3, 6, 6), -1, 1)
        mask = random_mask(rng, (2, 6, 6), 0.5)
        mean, _ = masked_stats(x, mask)
        shifted = x - mean[:, :, None, None] * mask[:, None]
        recentred, _ = masked_stats(shifted, mask)
        assert np.abs(recentred).max() <= 1e-10


class TestSoftmax:
    """Tests for softmax."""

    def test_symmetric_pair(self):
        np.testing.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5])

    def test_singleton(self):
        np.testing.assert_allclose(softmax([3.0]), [1.0])

    def test_large_scores_do_not_overflow(self):
        """Max subtraction keeps huge equal scores finite."""
        out = softmax([1000.0, 1000.0])
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, [0.5, 0.5])

    def test_empty_rejected(self):
        with pytest.raises(ShapeError, match="empty softmax"):
            softmax([])


class TestDownsampleMask:
    """Tests for downsample_mask."""

    def test_any_degraded_cell(self):
        """One degraded pixel marks the whole coarse cell."""
        mask = np.array([[[1.0, 0.0], [0.0, 0.0]]])
        np.testing.assert_array_equal(downsample_mask(mask, 2), [[[1.0]]])

    def test_all_zero_stays_zero(self):
        out = downsample_mask(np.zeros((1, 8, 8)), 4)
        assert out.shape == (1, 2, 2)
        assert not out.any()

    def test_corner_pixel_factor_four(self):
        mask = np.zeros((1, 4, 4))
        mask[0, 3, 3] = 1.0
        np.testing.assert_array_equal(downsample_mask(mask, 4), [[[1.0]]])

    def test_non_divisible_rejected(self):
        with pytest.raises(ShapeError):
            downsample_mask(np.zeros((1, 6, 6)), 4)

    def test_non_power_of_two_rejected(self):
        with pytest.raises(ShapeError):
            downsample_mask(np.zeros((1, 6, 6)), 3)

    def test_factor_one_is_identity(self, rng):
        mask = random_mask(rng, (2, 4, 4), 0.5)
        once = downsample_mask(mask, 1)
        np.testing.assert_array_equal(once, mask)
        np.testing.assert_array_equal(downsample_mask(once, 1), once)

    @pytest.mark.parametrize("factor", [1, 2, 4])
    def test_adding_degraded_pixels_is_monotone(self, rng, factor):
        """Setting extra 1s never clears a coarse cell."""
        mask = random_mask(rng, (2, 8, 8), 0.2)
        grown = np.maximum(mask, random_mask(rng, (2, 8, 8), 0.3))
        assert np.all(downsample_mask(grown, factor) >= downsample_mask(mask, factor))
