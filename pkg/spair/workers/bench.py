"""Sparse-versus-dense cost benchmark: wall time and exact MAC counts."""
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from statistics import median
from typing import Callable, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from threadpoolctl import threadpool_info, threadpool_limits

from spair.core.config import settings
from spair.core.errors import ConfigError, ShapeError
from spair.core.logging import get_logger
from spair.core.rng import Rng
from spair.ops import cost, guided
from spair.ops.tensor_core import ConvParams, conv2d_dense
from spair.schemas.reports import BenchRow

logger = get_logger(__name__)

CSV_COLUMNS = ["op", "h", "w", "c", "density", "wall_ns_median", "mac_count"]
SORT_KEYS = ["op", "h", "w", "c", "density"]


@dataclass
class BenchRun:
    rows: List[BenchRow]
    threads: int  # largest native pool size observed while timing


@contextmanager
def pinned_threads(limit: int) -> Iterator[int]:
    """Cap every BLAS/OpenMP pool at ``limit`` and yield the size actually in effect.

    With no native pool loaded numpy runs single-threaded, so the yielded count is 1.
    """
    if limit < 1:
        raise ConfigError(f"thread limit must be positive, got {limit}")
    with threadpool_limits(limits=limit):
        yield max((pool["num_threads"] for pool in threadpool_info()), default=1)


def random_mask(rng: Rng, shape: Tuple[int, int, int], density: float) -> np.ndarray:
    """Bernoulli(density) mask; 0 and 1 give the empty and full masks exactly."""
    if not 0.0 <= density <= 1.0:
        raise ShapeError(f"density must lie in [0, 1], got {density}")
    if density >= 1.0:
        return np.ones(shape, dtype=np.float32)
    return (rng.random_array(shape) < density).astype(np.float32)


def measure(fn: Callable[[], object], repeats: int, warmup: int) -> Tuple[int, int]:
    """(median wall ns over ``repeats`` timed calls, MACs of one call)."""
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        start = time.perf_counter_ns()
        fn()
        times.append(time.perf_counter_ns() - start)
    with cost.MacCounter() as counter:
        fn()
    return int(median(times)), counter.total


def _cases(rng: Rng, size: int, c: int, density: float, k: int):
    x = rng.uniform_array((1, c, size, size), -1.0, 1.0, np.float32)
    mask = random_mask(rng, (1, size, size), density)
    bound = 1.0 / np.sqrt(c * k * k)
    conv = ConvParams.same(rng.uniform_array((c, c, k, k), -bound, bound, np.float32),
                           np.zeros(c, np.float32))
    fusion = (rng.uniform_array((4, c, k, k), -bound, bound, np.float32), np.zeros(4, np.float32))
    return x, mask, conv, fusion


def bench_sparse(resolutions: Iterable[int], widths: Iterable[int], densities: Iterable[float],
                 repeats: int = 5, warmup: int = 1, k: int = 3, seed: int = 0,
                 threads: Optional[int] = None) -> BenchRun:
    """Rows for sparse_conv and snl_step at every density, plus the dense references.

    The references run once per (resolution, width) at density 1.0: ``conv2d_dense`` for
    sparse_conv and ``snl_step_all`` (every pixel a query and a source) for snl_step. All
    timing runs with native pools capped at ``threads`` (default ``SPAIR_BENCH_THREADS``).
    """
    rng = Rng(seed)
    rows: List[BenchRow] = []
    resolutions, widths, densities = list(resolutions), list(widths), list(densities)
    with pinned_threads(threads or settings.bench_threads) as active:
        for size in resolutions:
            for c in widths:
                x, full, conv, fusion = _cases(rng, size, c, 1.0, k)
                # the raw kernel does not report to the counter
                wall, _ = measure(lambda: conv2d_dense(x, conv), repeats, warmup)
                macs = cost.dense_conv_macs(1, size, size, k, c, c)
                rows.append(BenchRow(op="conv2d_dense", h=size, w=size, c=c, density=1.0,
                                     wall_ns_median=wall, mac_count=macs))
                wall, macs = measure(lambda: guided.snl_step(x, full, "all_pixels", fusion),
                                     repeats, warmup)
                rows.append(BenchRow(op="snl_step_all", h=size, w=size, c=c, density=1.0,
                                     wall_ns_median=wall, mac_count=macs))
                for density in densities:
                    x, mask, conv, fusion = _cases(rng, size, c, density, k)
                    params = (conv.weights, conv.bias)
                    wall, macs = measure(lambda: guided.sparse_conv(x, mask, params), repeats, warmup)
                    rows.append(BenchRow(op="sparse_conv", h=size, w=size, c=c, density=density,
                                         wall_ns_median=wall, mac_count=macs))
                    wall, macs = measure(lambda: guided.snl_step(x, mask, "clean_only", fusion),
                                         repeats, warmup)
                    rows.append(BenchRow(op="snl_step", h=size, w=size, c=c, density=density,
                                         wall_ns_median=wall, mac_count=macs))
                    logger.debug("bench.row", h=size, c=c, density=density)
    rows.sort(key=lambda r: tuple(getattr(r, key) for key in SORT_KEYS))
    logger.info("bench.complete", rows=len(rows), threads=active)
    return BenchRun(rows=rows, threads=active)


def speedup_warnings(rows: Sequence[BenchRow], density: float = 0.1, ratio: float = 0.6) -> List[str]:
    """sparse_conv / dense wall-time ratios above ``ratio`` at ``density``."""
    dense = {(r.h, r.c): r.wall_ns_median for r in rows if r.op == "conv2d_dense"}
    notes = []
    for r in rows:
        if r.op != "sparse_conv" or r.density != density:
            continue
        ref = dense.get((r.h, r.c))
        if ref and r.wall_ns_median / ref > ratio:
            notes.append(f"sparse_conv at density {density} ({r.h}x{r.w}, C={r.c}) "
                         f"runs at {r.wall_ns_median / ref:.2f}x the dense reference")
    return notes


def write_csv(run: BenchRun, path: Optional[Path] = None) -> str:
    """CSV text with a leading ``# threads=<n>`` metadata line; also written to ``path``."""
    frame = pd.DataFrame([r.model_dump() for r in run.rows], columns=CSV_COLUMNS)
    text = f"# threads={run.threads}\n" + frame.to_csv(index=False, lineterminator="\n")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
