"""Unit tests for the distortion-guided operators against the loop oracles."""
import numpy as np
import pytest

from spair.core.errors import EmptyRegionError, ShapeError
from spair.ops import cost, guided
from spair.ops.oracles import (
    sc_block_loop,
    snl_module_loop,
    snl_step_loop,
    sparse_conv_loop,
    sparse_pointwise_loop,
)
from spair.ops.tensor_core import ConvParams, conv2d_dense
from tests.helpers import random_mask


class TestSparseConv:
    """Tests for sparse_conv."""

    def test_matches_loop_oracle(self, rng):
        """Random f64 instance agrees with the gather loops."""
        x = rng.uniform_array((2, 3, 7, 7), -1, 1)
        w = rng.uniform_array((4, 3, 3, 3), -1, 1)
        b = rng.uniform_array((4,), -1, 1)
        mask = random_mask(rng, (2, 7, 7), 0.4)
        out = guided.sparse_conv(x, mask, (w, b)).value
        np.testing.assert_allclose(out, sparse_conv_loop(x, mask, w, b), atol=1e-12, rtol=0)

    def test_identity_kernel_gates_input(self, rng):
        """A 1x1 unit kernel yields F * M."""
        x = rng.uniform_array((1, 2, 5, 5), -1, 1)
        mask = random_mask(rng, (1, 5, 5), 0.5)
        out = guided.sparse_conv(x, mask, (np.eye(2).reshape(2, 2, 1, 1), np.zeros(2))).value
        np.testing.assert_allclose(out, x * mask[:, None], atol=1e-15)

    def test_full_mask_equals_dense(self, rng):
        """With every pixel degraded the op is the dense convolution."""
        x = rng.uniform_array((1, 3, 6, 6), -1, 1)
        w = rng.uniform_array((2, 3, 3, 3), -1, 1)
        b = rng.uniform_array((2,), -1, 1)
        out = guided.sparse_conv(x, np.ones((1, 6, 6)), (w, b)).value
        np.testing.assert_allclose(out, conv2d_dense(x, ConvParams.same(w, b)), atol=1e-12)

    def test_clean_neighbour_is_ignored(self):
        """Row [a, b, c] with mask [1, 0, 1] and a [1, 1, 1] kernel gives [a, 0, c]."""
        x = np.array([2.0, 5.0, 7.0]).reshape(1, 1, 1, 3)
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, :] = 1.0
        mask = np.array([1.0, 0.0, 1.0]).reshape(1, 1, 3)
        out = guided.sparse_conv(x, mask, (w, np.zeros(1))).value
        np.testing.assert_array_equal(out.reshape(-1), [2.0, 0.0, 7.0])

    def test_empty_mask_gives_zeros(self, rng):
        x = rng.uniform_array((1, 2, 4, 4), -1, 1)
        out = guided.sparse_conv(x, np.zeros((1, 4, 4)), (np.ones((3, 2, 3, 3)), np.ones(3))).value
        assert out.shape == (1, 3, 4, 4)
        assert not out.any()

    def test_even_kernel_rejected(self):
        with pytest.raises(ShapeError):
            guided.sparse_conv(np.ones((1, 1, 4, 4)), np.ones((1, 4, 4)), (np.ones((1, 1, 2, 2)), np.zeros(1)))

    def test_mask_resolution_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            guided.sparse_conv(np.ones((1, 1, 4, 4)), np.ones((1, 2, 2)), (np.ones((1, 1, 3, 3)), np.zeros(1)))

    def test_mac_count_enumerates_masked_taps(self, rng):
        """Recorded MACs equal (masked outputs x masked in-bounds neighbours) x C_in x C_out."""
        h = w = 6
        mask = random_mask(rng, (1, h, w), 0.3)
        expected = 0
        for i in range(h):
            for j in range(w):
                if mask[0, i, j] != 1:
                    continue
                for a in (-1, 0, 1):
                    for d in (-1, 0, 1):
                        y, z = i + a, j + d
                        if 0 <= y < h and 0 <= z < w and mask[0, y, z] == 1:
                            expected += 1
        x = rng.uniform_array((1, 2, h, w), -1, 1)
        with cost.MacCounter() as counter:
            guided.sparse_conv(x, mask, (np.ones((5, 2, 3, 3)), np.zeros(5)))
        assert counter.counts["sparse_conv"] == expected * 2 * 5


class TestSparsePointwise:
    """Tests for sparse_pointwise."""

    def test_matches_loop_oracle(self, rng):
        x = rng.uniform_array((2, 4, 5, 5), -1, 1)
        w = rng.uniform_array((4, 4), -1, 1)
        b = rng.uniform_array((4,), -1, 1)
        mask = random_mask(rng, (2, 5, 5), 0.3)
        out = guided.sparse_pointwise(x, mask, w, b).value
        np.testing.assert_allclose(out, sparse_pointwise_loop(x, mask, w, b), atol=1e-12, rtol=0)

    def test_identity_weights(self, rng):
        x = rng.uniform_array((1, 3, 4, 4), -1, 1)
        out = guided.sparse_pointwise(x, random_mask(rng, (1, 4, 4), 0.5), np.eye(3), np.zeros(3)).value
        np.testing.assert_allclose(out, x, atol=1e-15)

    def test_empty_mask_passes_through(self, rng):
        x = rng.uniform_array((1, 3, 4, 4), -1, 1)
        w = rng.uniform_array((3, 3), -1, 1)
        out = guided.sparse_pointwise(x, np.zeros((1, 4, 4)), w, np.ones(3)).value
        np.testing.assert_array_equal(out, x)

    def test_weight_shape_rejected(self):
        with pytest.raises(ShapeError):
            guided.sparse_pointwise(np.ones((1, 3, 2, 2)), np.ones((1, 2, 2)), np.eye(2), np.zeros(2))


class TestSnlStep:
    """Tests for snl_step."""

    def _fusion(self, channels: int, right: float):
        bias = np.zeros(4)
        bias[guided.DIRECTIONS.index("right")] = right
        return np.zeros((4, channels, 3, 3)), bias

    def test_single_source_to_the_right(self):
        """A lone admissible source gets softmax weight 1."""
        x = np.array([[0.3, -0.2], [0.5, 0.9]]).reshape(1, 2, 1, 2)
        mask = np.array([[[1.0, 0.0]]])
        out = guided.snl_step(x, mask, "clean_only", self._fusion(2, 2.0)).value
        np.testing.assert_allclose(out[0, :, 0, 0], x[0, :, 0, 0] + 2.0 * x[0, :, 0, 1], atol=1e-12)
        np.testing.assert_array_equal(out[0, :, 0, 1], x[0, :, 0, 1])

    def test_identical_sources_share_weight(self):
        """Two equal source vectors aggregate to that vector."""
        source = np.array([0.4, -0.7])
        x = np.zeros((1, 2, 1, 3))
        x[0, :, 0, 0] = [1.0, 2.0]
        x[0, :, 0, 1] = source
        x[0, :, 0, 2] = source
        mask = np.array([[[1.0, 0.0, 0.0]]])
        out = guided.snl_step(x, mask, "clean_only", self._fusion(2, 1.0)).value
        np.testing.assert_allclose(out[0, :, 0, 0], x[0, :, 0, 0] + source, atol=1e-12)

    @pytest.mark.parametrize("policy", ["clean_only", "all_pixels"])
    def test_matches_triple_loop_oracle(self, rng, policy):
        """Random 1x4x8x8 instance at 30% density agrees with the naive loops."""
        x = rng.uniform_array((1, 4, 8, 8), -1, 1)
        w = rng.uniform_array((4, 4, 3, 3), -0.5, 0.5)
        b = rng.uniform_array((4,), -0.5, 0.5)
        mask = random_mask(rng, (1, 8, 8), 0.3)
        out = guided.snl_step(x, mask, policy, (w, b)).value
        np.testing.assert_allclose(out, snl_step_loop(x, mask, policy, w, b), atol=1e-10, rtol=0)

    def test_clean_pixels_bitwise_unchanged(self, rng):
        x = rng.uniform_array((2, 3, 6, 6), -1, 1)
        w = rng.uniform_array((4, 3, 3, 3), -1, 1)
        mask = random_mask(rng, (2, 6, 6), 0.4)
        out = guided.snl_step(x, mask, "all_pixels", (w, np.zeros(4))).value
        clean = np.broadcast_to(mask[:, None] == 0, x.shape)
        np.testing.assert_array_equal(out[clean], x[clean])

    def test_empty_mask_passes_through(self, rng):
        x = rng.uniform_array((1, 2, 4, 4), -1, 1)
        out = guided.snl_step(x, np.zeros((1, 4, 4)), "clean_only", self._fusion(2, 3.0)).value
        np.testing.assert_array_equal(out, x)

    def test_fusion_width_rejected(self):
        with pytest.raises(ShapeError):
            guided.snl_step(np.ones((1, 2, 4, 4)), np.ones((1, 4, 4)), "clean_only",
                            (np.zeros((3, 2, 3, 3)), np.zeros(3)))

    def test_unknown_policy_rejected(self):
        with pytest.raises(ShapeError):
            guided.snl_step(np.ones((1, 2, 4, 4)), np.ones((1, 4, 4)), "nearby",
                            (np.zeros((4, 2, 3, 3)), np.zeros(4)))


class TestSnlModule:
    """Tests for the two-step sparse non-local module."""

    def _module(self, rng, c: int, policy: str):
        return guided.SnlModule(
            fusion1=(rng.uniform_array((4, c, 3, 3), -0.5, 0.5), rng.uniform_array((4,), -0.5, 0.5)),
            pointwise=(rng.uniform_array((c, c), -1, 1), rng.uniform_array((c,), -0.5, 0.5)),
            fusion2=(rng.uniform_array((4, c, 3, 3), -0.5, 0.5), rng.uniform_array((4,), -0.5, 0.5)),
            policy=policy,
        )

    @pytest.mark.parametrize("policy", ["clean_only", "all_pixels"])
    def test_matches_composed_oracles(self, rng, policy):
        x = rng.uniform_array((1, 3, 8, 8), -1, 1)
        mask = random_mask(rng, (1, 8, 8), 0.3)
        module = self._module(rng, 3, policy)
        out = guided.snl_module_forward(x, mask, module).value
        ref = snl_module_loop(x, mask, module.fusion1, module.pointwise, module.fusion2, policy)
        np.testing.assert_allclose(out, ref, atol=1e-10, rtol=0)

    def test_zero_fusion_identity_pointwise_passes_through(self, rng):
        x = rng.uniform_array((1, 3, 6, 6), -1, 1)
        zero = (np.zeros((4, 3, 3, 3)), np.zeros(4))
        module = guided.SnlModule(fusion1=zero, pointwise=(np.eye(3), np.zeros(3)), fusion2=zero)
        out = guided.snl_module_forward(x, random_mask(rng, (1, 6, 6), 0.5), module).value
        np.testing.assert_allclose(out, x, atol=1e-15)

    def test_empty_mask_passes_through(self, rng):
        x = rng.uniform_array((1, 3, 6, 6), -1, 1)
        out = guided.snl_module_forward(x, np.zeros((1, 6, 6)), self._module(rng, 3, "clean_only")).value
        np.testing.assert_array_equal(out, x)


class TestScBlock:
    """Tests for the sparse-convolution block."""

    def _block(self, rng, c: int, growth: int, depth: int, scale: float = 0.5):
        layers = [
            (rng.uniform_array((growth, c + i * growth, 3, 3), -scale, scale),
             rng.uniform_array((growth,), -scale, scale))
            for i in range(depth)
        ]
        reduce = (rng.uniform_array((c, c + depth * growth, 1, 1), -scale, scale),
                  rng.uniform_array((c,), -scale, scale))
        return guided.ScBlock(layers=layers, reduce=reduce)

    def test_matches_composed_oracle(self, rng):
        x = rng.uniform_array((1, 3, 6, 6), -1, 1)
        mask = random_mask(rng, (1, 6, 6), 0.4)
        block = self._block(rng, 3, 2, 3)
        out = guided.sc_block_forward(x, mask, block).value
        ref = sc_block_loop(x, mask, block.layers, block.reduce, block.slope)
        np.testing.assert_allclose(out, ref, atol=1e-12, rtol=0)

    def test_empty_mask_passes_through(self, rng):
        x = rng.uniform_array((1, 3, 6, 6), -1, 1)
        out = guided.sc_block_forward(x, np.zeros((1, 6, 6)), self._block(rng, 3, 2, 2)).value
        np.testing.assert_array_equal(out, x)

    def test_zero_weights_pass_through(self, rng):
        x = rng.uniform_array((1, 3, 6, 6), -1, 1)
        out = guided.sc_block_forward(x, random_mask(rng, (1, 6, 6), 0.5),
                                      self._block(rng, 3, 2, 2, scale=0.0)).value
        np.testing.assert_allclose(out, x, atol=1e-15)

    def test_channel_mismatch_rejected(self, rng):
        with pytest.raises(ShapeError):
            guided.sc_block_forward(np.ones((1, 4, 6, 6)), np.ones((1, 6, 6)), self._block(rng, 3, 2, 2))


class TestSfm:
    """Tests for spatial feature modulation."""

    def test_hand_example(self):
        """Degraded [1, 2] is mapped onto the clean statistics of [3, 4]."""
        feat = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 1, 1, 4)
        mask = np.array([1.0, 1.0, 0.0, 0.0]).reshape(1, 1, 4)
        out = guided.sfm_modulate(feat, np.zeros_like(feat), mask).value
        np.testing.assert_allclose(out.reshape(-1), [3.0, 4.0, 3.0, 4.0], atol=1e-4)

    def test_empty_degraded_region_returns_fused(self, rng):
        feat = rng.uniform_array((1, 2, 4, 4), -1, 1)
        loc = rng.uniform_array((1, 2, 4, 4), -1, 1)
        out = guided.sfm_modulate(feat, loc, np.zeros((1, 4, 4))).value
        np.testing.assert_array_equal(out, feat + loc)

    def test_clean_pixels_hold_fused_features(self, rng):
        feat = rng.uniform_array((1, 3, 6, 6), -1, 1)
        loc = rng.uniform_array((1, 3, 6, 6), -1, 1)
        mask = random_mask(rng, (1, 6, 6), 0.4)
        out = guided.sfm_modulate(feat, loc, mask).value
        clean = np.broadcast_to(mask[:, None] == 0, feat.shape)
        np.testing.assert_array_equal(out[clean], (feat + loc)[clean])

    def test_degraded_region_takes_clean_statistics(self, rng):
        feat = rng.uniform_array((1, 3, 8, 8), -1, 1)
        loc = rng.uniform_array((1, 3, 8, 8), 2, 3)
        mask = random_mask(rng, (1, 8, 8), 0.4)
        out = guided.sfm_modulate(feat, loc, mask)
        mean_deg, std_deg = guided.masked_stats(out, mask)
        mean_clean, std_clean = guided.masked_stats(feat + loc, 1.0 - mask)
        np.testing.assert_allclose(mean_deg.value, mean_clean.value, atol=1e-10)
        np.testing.assert_allclose(std_deg.value, std_clean.value, atol=1e-3)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            guided.sfm_modulate(np.ones((1, 2, 4, 4)), np.ones((1, 3, 4, 4)), np.ones((1, 4, 4)))


class TestGuidedMaskedStats:
    """Tests for the differentiable masked statistics."""

    def test_empty_region_rejected(self):
        with pytest.raises(EmptyRegionError):
            guided.masked_stats(np.ones((1, 2, 3, 3)), np.zeros((1, 3, 3)))

    def test_shapes(self, rng):
        mean, std = guided.masked_stats(rng.uniform_array((2, 5, 4, 4), -1, 1),
                                        random_mask(rng, (2, 4, 4), 0.5))
        assert mean.shape == (2, 5)
        assert std.shape == (2, 5)


class TestBatchPermutation:
    """Reordering the batch reorders every operator's output the same way."""

    N, C, H = 3, 3, 6
    PERM = [2, 0, 1]

    @pytest.fixture
    def case(self, rng):
        x = rng.uniform_array((self.N, self.C, self.H, self.H), -1, 1)
        loc = rng.uniform_array((self.N, self.C, self.H, self.H), -1, 1)
        mask = random_mask(rng, (self.N, self.H, self.H), 0.4)
        conv = (rng.uniform_array((self.C, self.C, 3, 3), -0.5, 0.5), rng.uniform_array((self.C,), -0.5, 0.5))
        fusion = (rng.uniform_array((4, self.C, 3, 3), -0.5, 0.5), rng.uniform_array((4,), -0.5, 0.5))
        pointwise = (rng.uniform_array((self.C, self.C), -1, 1), rng.uniform_array((self.C,), -0.5, 0.5))
        block = guided.ScBlock(
            layers=[(rng.uniform_array((2, self.C, 3, 3), -0.5, 0.5), rng.uniform_array((2,), -0.5, 0.5))],
            reduce=(rng.uniform_array((self.C, self.C + 2, 1, 1), -0.5, 0.5),
                    rng.uniform_array((self.C,), -0.5, 0.5)),
        )
        module = guided.SnlModule(fusion1=fusion, pointwise=pointwise, fusion2=fusion)
        ops = {
            "conv2d_dense": lambda x, loc, m: conv2d_dense(x, ConvParams.same(*conv)),
            "masked_stats": lambda x, loc, m: np.concatenate(
                [s.value for s in guided.masked_stats(x, m)], axis=1),
            "sfm_modulate": lambda x, loc, m: guided.sfm_modulate(x, loc, m).value,
            "sparse_conv": lambda x, loc, m: guided.sparse_conv(x, m, conv).value,
            "sparse_pointwise": lambda x, loc, m: guided.sparse_pointwise(x, m, *pointwise).value,
            "snl_step": lambda x, loc, m: guided.snl_step(x, m, "clean_only", fusion).value,
            "snl_module": lambda x, loc, m: guided.snl_module_forward(x, m, module).value,
            "sc_block": lambda x, loc, m: guided.sc_block_forward(x, m, block).value,
        }
        return x, loc, mask, ops

    @pytest.mark.parametrize("name", [
        "conv2d_dense", "masked_stats", "sfm_modulate", "sparse_conv",
        "sparse_pointwise", "snl_step", "snl_module", "sc_block",
    ])
    def test_commutes(self, case, name):
        x, loc, mask, ops = case
        op = ops[name]
        permuted = op(x[self.PERM], loc[self.PERM], mask[self.PERM])
        np.testing.assert_allclose(permuted, op(x, loc, mask)[self.PERM], atol=1e-12, rtol=0)
