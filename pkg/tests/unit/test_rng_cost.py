"""Unit tests for the seeded generator, MAC accounting and the sparse benchmark."""
import numpy as np
import pytest
from threadpoolctl import threadpool_info

from spair.core.errors import ConfigError
from spair.core.rng import Rng
from spair.ops import cost
from spair.workers.bench import (
    CSV_COLUMNS,
    SORT_KEYS,
    bench_sparse,
    pinned_threads,
    random_mask,
    speedup_warnings,
    write_csv,
)


class TestRng:
    """Tests for Rng."""

    def test_same_seed_same_stream(self):
        a, b = Rng(42), Rng(42)
        assert [a.next_u64() for _ in range(5)] == [b.next_u64() for _ in range(5)]

    def test_seeds_diverge(self):
        assert Rng(1).next_u64() != Rng(2).next_u64()

    def test_unit_interval(self):
        rng = Rng(3)
        values = [rng.random() for _ in range(1000)]
        assert min(values) >= 0.0
        assert max(values) < 1.0
        assert 0.4 < np.mean(values) < 0.6

    def test_integers_stay_in_range(self):
        rng = Rng(4)
        draws = {rng.integers(2, 5) for _ in range(200)}
        assert draws == {2, 3, 4}

    def test_empty_integer_range_rejected(self):
        with pytest.raises(ValueError):
            Rng(0).integers(3, 3)

    def test_permutation(self):
        order = Rng(5).permutation(10)
        assert sorted(order) == list(range(10))

    def test_split_streams_are_reproducible(self):
        first = Rng(Rng(9).split()).random_array((3, 3))
        second = Rng(Rng(9).split()).random_array((3, 3))
        np.testing.assert_array_equal(first, second)

    def test_uniform_array_bounds_and_dtype(self):
        values = Rng(6).uniform_array((50, 7), -2.0, 3.0, np.float32)
        assert values.dtype == np.float32
        assert values.shape == (50, 7)
        assert values.min() >= -2.0
        assert values.max() <= 3.0


class TestMacCounts:
    """Tests for the MAC formulas."""

    def test_dense_counts_in_bounds_taps(self):
        """3x3 kernel over 3x3 image: 9 + 4 * 6 + 4 * 4 = 49 taps."""
        assert cost.dense_conv_macs(1, 3, 3, 3, 1, 1) == 49
        assert cost.dense_conv_macs(2, 3, 3, 3, 4, 5) == 49 * 2 * 4 * 5

    def test_full_mask_matches_dense(self):
        mask = np.ones((1, 8, 8))
        assert cost.sparse_conv_macs(mask, 3, 4, 6) == cost.dense_conv_macs(1, 8, 8, 3, 4, 6)

    def test_empty_mask_is_free(self):
        assert cost.sparse_conv_macs(np.zeros((1, 8, 8)), 3, 4, 4) == 0
        assert cost.sparse_pointwise_macs(np.zeros((1, 8, 8)), 4, 4) == 0

    def test_counter_is_scoped(self):
        with cost.MacCounter() as counter:
            cost.record("op", 5)
            cost.record("op", 7)
        cost.record("op", 100)
        assert counter.counts == {"op": 12}
        assert not cost.counting()


class TestBench:
    """Tests for the sparse-versus-dense benchmark."""

    @pytest.fixture
    def run(self):
        return bench_sparse([16], [2], [0.0, 0.5, 1.0], repeats=1, warmup=0, seed=1)

    @pytest.fixture
    def rows(self, run):
        return run.rows

    def test_density_zero_costs_nothing(self, rows):
        sparse = [r for r in rows if r.op in ("sparse_conv", "snl_step") and r.density == 0.0]
        assert len(sparse) == 2
        assert all(r.mac_count == 0 for r in sparse)

    def test_full_density_matches_dense_conv(self, rows):
        dense = next(r for r in rows if r.op == "conv2d_dense")
        full = next(r for r in rows if r.op == "sparse_conv" and r.density == 1.0)
        assert full.mac_count == dense.mac_count == cost.dense_conv_macs(1, 16, 16, 3, 2, 2)

    def test_rows_are_sorted(self, rows):
        keys = [tuple(getattr(r, k) for k in SORT_KEYS) for r in rows]
        assert keys == sorted(keys)
        assert len(rows) == 2 + 2 * 3

    def test_csv_has_thread_line_and_columns(self, run, tmp_path):
        text = write_csv(run, tmp_path / "bench.csv")
        lines = text.splitlines()
        assert lines[0] == f"# threads={run.threads}"
        assert lines[1] == ",".join(CSV_COLUMNS)
        assert len(lines) == 2 + len(run.rows)
        assert (tmp_path / "bench.csv").read_text(encoding="utf-8") == text

    def test_timing_runs_single_threaded(self, run):
        """The default cap of one thread is what the CSV header reports."""
        assert run.threads == 1
        assert write_csv(run).splitlines()[0] == "# threads=1"

    def test_pinned_threads_caps_native_pools(self):
        with pinned_threads(1) as active:
            assert active == 1
            assert all(pool["num_threads"] == 1 for pool in threadpool_info())

    def test_pinned_threads_rejects_zero(self):
        with pytest.raises(ConfigError):
            with pinned_threads(0):
                pass

    def test_random_mask_extremes(self):
        rng = Rng(0)
        assert not random_mask(rng, (1, 4, 4), 0.0).any()
        assert random_mask(rng, (1, 4, 4), 1.0).all()

    def test_speedup_warning(self, rows):
        slow = [r.model_copy(update={"density": 0.1, "wall_ns_median": 10**9})
                for r in rows if r.op == "sparse_conv" and r.density == 0.5]
        dense = [r.model_copy(update={"wall_ns_median": 10**6}) for r in rows if r.op == "conv2d_dense"]
        assert len(speedup_warnings(slow + dense)) == 1
