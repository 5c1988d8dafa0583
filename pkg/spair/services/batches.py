"""Random crop / flip augmentation and the deterministic training batch stream."""
import queue
import threading
from dataclasses import dataclass
from typing import Iterator, List, Sequence

import numpy as np

from spair.core.errors import ShapeError
from spair.core.logging import get_logger
from spair.core.rng import Rng
from spair.services.synthdata import Sample

logger = get_logger(__name__)

_DONE = object()


@dataclass
class Batch:
    degraded: np.ndarray  # (b, 3, p, p)
    clean: np.ndarray  # (b, 3, p, p)
    mask: np.ndarray  # (b, p, p)
    kinds: List[str]


def crop(sample: Sample, top: int, left: int, size: int):
    sl = (slice(None), slice(None), slice(top, top + size), slice(left, left + size))
    return sample.degraded[sl], sample.clean[sl], sample.gt_mask[:, top:top + size, left:left + size]


def flip(arrays, horizontal: bool, vertical: bool):
    """Flip image tensors and masks together; width is always the last axis."""
    out = []
    for a in arrays:
        if horizontal:
            a = a[..., ::-1]
        if vertical:
            a = a[..., ::-1, :]
        out.append(np.ascontiguousarray(a))
    return out


class BatchLoader:
    """Draws ``batch_size`` random patches per step from a fixed sample list.

    Sample order comes from a shuffled permutation redrawn every pass over the data, crop
    offsets and flips from the same PRNG, so the batch sequence depends only on the seed.
    With ``prefetch_depth > 0`` a single producer thread fills a bounded queue; batches are
    produced and consumed strictly in order, so prefetching never changes their content.
    """

    def __init__(self, samples: Sequence[Sample], batch_size: int, patch_size: int, seed: int,
                 hflip: bool = True, vflip: bool = True, prefetch_depth: int = 0):
        if not samples:
            raise ShapeError("BatchLoader needs at least one sample")
        _, _, h, w = samples[0].clean.shape
        if patch_size > min(h, w):
            raise ShapeError(f"patch_size {patch_size} exceeds sample size {h}x{w}")
        self.samples = list(samples)
        self.batch_size = batch_size
        self.patch_size = patch_size
        self.hflip, self.vflip = hflip, vflip
        self.prefetch_depth = prefetch_depth
        self.rng = Rng(seed)
        self._order: List[int] = []

    def _next_index(self) -> int:
        if not self._order:
            self._order = list(self.rng.permutation(len(self.samples)))
        return self._order.pop(0)

    def _draws(self):
        """(sample, top, left, hflip, vflip) per patch of the next batch; advances the PRNG."""
        p = self.patch_size
        draws = []
        for _ in range(self.batch_size):
            sample = self.samples[self._next_index()]
            _, _, h, w = sample.clean.shape
            top = self.rng.integers(0, h - p + 1)
            left = self.rng.integers(0, w - p + 1)
            horizontal = self.hflip and self.rng.bernoulli(0.5)
            vertical = self.vflip and self.rng.bernoulli(0.5)
            draws.append((sample, top, left, horizontal, vertical))
        return draws

    def next_batch(self) -> Batch:
        degraded, clean, masks, kinds = [], [], [], []
        for sample, top, left, horizontal, vertical in self._draws():
            d, c, m = flip(crop(sample, top, left, self.patch_size), horizontal, vertical)
            degraded.append(d)
            clean.append(c)
            masks.append(m)
            kinds.append(sample.kind)
        return Batch(np.concatenate(degraded), np.concatenate(clean), np.concatenate(masks), kinds)

    def skip(self, steps: int) -> None:
        """Advance past ``steps`` batches without building them."""
        for _ in range(steps):
            self._draws()

    def stream(self, steps: int) -> Iterator[Batch]:
        if self.prefetch_depth <= 0:
            for _ in range(steps):
                yield self.next_batch()
            return
        yield from self._prefetched(steps)

    def _prefetched(self, steps: int) -> Iterator[Batch]:
        handoff: queue.Queue = queue.Queue(maxsize=self.prefetch_depth)
        stop = threading.Event()
        failure: List[BaseException] = []

        def produce():
            try:
                for _ in range(steps):
                    if stop.is_set():
                        return
                    handoff.put(self.next_batch())
            except BaseException as exc:  # surfaced in the consumer
                failure.append(exc)
            finally:
                handoff.put(_DONE)

        producer = threading.Thread(target=produce, name="spair-batches", daemon=True)
        producer.start()
        try:
            while True:
                item = handoff.get()
                if item is _DONE:
                    break
                yield item
            if failure:
                raise failure[0]
        finally:
            stop.set()
            # drain so a blocked producer can observe the stop flag
            while producer.is_alive():
                try:
                    handoff.get(timeout=0.05)
                except queue.Empty:
                    pass
            producer.join()
