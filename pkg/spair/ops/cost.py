"""Exact multiply-accumulate accounting for the sparse and dense kernels.

Ops report their work through :func:`record`; a :class:`MacCounter` collects it while active.
"""
from contextvars import ContextVar
from typing import Dict, Optional

import numpy as np

from spair.ops.tensor_core import as_mask, im2col

_active: ContextVar[Optional["MacCounter"]] = ContextVar("mac_counter", default=None)


class MacCounter:
    """Context manager collecting per-op MAC counts."""

    def __init__(self):
        self.counts: Dict[str, int] = {}
        self._token = None

    def __enter__(self) -> "MacCounter":
        self._token = _active.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _active.reset(self._token)

    def add(self, op: str, macs: int) -> None:
        self.counts[op] = self.counts.get(op, 0) + int(macs)

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def counting() -> bool:
    return _active.get() is not None


def record(op: str, macs: int) -> None:
    counter = _active.get()
    if counter is not None:
        counter.add(op, macs)


def _neighbor_counts(mask: np.ndarray, k: int) -> np.ndarray:
    """For every pixel, number of in-bounds kernel taps landing on a mask-1 pixel."""
    m = mask[:, None, :, :].astype(np.int64)
    return im2col(m, k, 1, (k - 1) // 2).sum(axis=(4, 5))[:, 0]


def sparse_conv_macs(mask, k: int, c_in: int, c_out: int) -> int:
    """(masked outputs) x (masked neighbours per output) x C_in x C_out."""
    m = as_mask(mask)
    neighbors = _neighbor_counts(m, k)
    return int((neighbors * (m == 1)).sum()) * c_in * c_out


def dense_conv_macs(n: int, h: int, w: int, k: int, c_in: int, c_out: int,
                    stride: int = 1, padding: Optional[int] = None) -> int:
    """In-bounds taps only: zero padding is not counted as work."""
    if padding is None:
        padding = (k - 1) // 2
    ones = np.ones((1, 1, h, w), dtype=np.int64)
    taps = im2col(ones, k, stride, padding).sum(axis=(4, 5))
    return int(taps.sum()) * n * c_in * c_out


def sparse_pointwise_macs(mask, c_in: int, c_out: int) -> int:
    m = as_mask(mask)
    return int(m.sum()) * c_in * c_out


def attention_macs(admissible: np.ndarray, c: int) -> int:
    """Scores plus weighted sum: 2 * C per admissible (query, source) pair."""
    return int(np.count_nonzero(admissible)) * 2 * c
