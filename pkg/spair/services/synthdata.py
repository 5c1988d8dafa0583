"""Procedural clean images and four spatially sparse degradation families.

Every sample is a pure function of (seed, kind, severity, size). Ground-truth masks are
never drawn by hand: they are re-derived from the (clean, degraded) pair by thresholding.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from spair.core.errors import ShapeError
from spair.core.logging import get_logger
from spair.core.rng import Rng
from spair.schemas.reports import ManifestEntry
from spair.services.losses import DEFAULT_MASK_THRESHOLD, gt_mask_from_pair

logger = get_logger(__name__)

KINDS = ("streak", "blob", "shadow", "region_blur")
MAX_DEGRADED_FRACTION = 0.5
DTYPE = np.float32


@dataclass
class Sample:
    clean: np.ndarray  # (1, 3, h, w)
    degraded: np.ndarray  # (1, 3, h, w)
    gt_mask: np.ndarray  # (1, h, w)
    kind: str
    seed: int
    severity: float = 1.0


def _grid(h: int, w: int) -> Tuple[np.ndarray, np.ndarray]:
    """Pixel-centre coordinates (x to the right, y down)."""
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return xs + 0.5, ys + 0.5


def _bilinear_upsample(coarse: np.ndarray, h: int, w: int) -> np.ndarray:
    gh, gw = coarse.shape
    ys = np.linspace(0, gh - 1, h)
    xs = np.linspace(0, gw - 1, w)
    y0 = np.clip(np.floor(ys).astype(int), 0, gh - 2)
    x0 = np.clip(np.floor(xs).astype(int), 0, gw - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = coarse[y0][:, x0]
    b = coarse[y0][:, x0 + 1]
    c = coarse[y0 + 1][:, x0]
    d = coarse[y0 + 1][:, x0 + 1]
    return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy


def box_blur(image: np.ndarray, k: int) -> np.ndarray:
    """k x k mean filter with edge replication on a (1, c, h, w) image."""
    r = k // 2
    padded = np.pad(image.astype(np.float64), ((0, 0), (0, 0), (r, r), (r, r)), mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(2, 3))
    return windows.mean(axis=(4, 5))


def gen_clean(h: int, w: int, seed: int, dtype=DTYPE) -> np.ndarray:
    """Sum of 4-8 random 2-D sinusoids per channel plus value noise, scaled into [0.05, 0.95]."""
    if h < 16 or w < 16:
        raise ShapeError(f"gen_clean: image must be at least 16x16, got {h}x{w}")
    rng = Rng(seed)
    xs, ys = _grid(h, w)
    image = np.zeros((3, h, w))
    for channel in range(3):
        for _ in range(rng.integers(4, 9)):
            amplitude = rng.uniform(0.2, 1.0)
            angle = rng.uniform(0.0, 2 * math.pi)
            cycles = rng.uniform(0.5, 6.0)
            phase = rng.uniform(0.0, 2 * math.pi)
            fx = cycles * math.cos(angle) / w
            fy = cycles * math.sin(angle) / h
            image[channel] += amplitude * np.sin(2 * math.pi * (fx * xs + fy * ys) + phase)
        coarse = rng.uniform_array((h // 8 + 2, w // 8 + 2), -0.3, 0.3)
        image[channel] += _bilinear_upsample(coarse, h, w)
    lo, hi = image.min(), image.max()
    image = 0.05 + 0.9 * (image - lo) / max(hi - lo, 1e-12)
    return np.clip(image, 0.05, 0.95)[None].astype(dtype)


def _segment_distance(xs, ys, x0, y0, x1, y1) -> np.ndarray:
    dx, dy = x1 - x0, y1 - y0
    length2 = max(dx * dx + dy * dy, 1e-12)
    t = np.clip(((xs - x0) * dx + (ys - y0) * dy) / length2, 0.0, 1.0)
    return np.hypot(xs - (x0 + t * dx), ys - (y0 + t * dy))


def _streak_layers(clean: np.ndarray, rng: Rng, count: int) -> List[Callable[[np.ndarray], np.ndarray]]:
    _, _, h, w = clean.shape
    xs, ys = _grid(h, w)
    dominant = rng.uniform(-math.pi / 4, math.pi / 4)
    layers = []
    for _ in range(count):
        angle = dominant + rng.uniform(-math.pi / 6, math.pi / 6)
        length = rng.uniform(0.2, 0.6) * min(h, w)
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        brightness = rng.uniform(0.3, 0.8)
        # angle measured from vertical
        hx, hy = 0.5 * length * math.sin(angle), 0.5 * length * math.cos(angle)
        dist = _segment_distance(xs, ys, cx - hx, cy - hy, cx + hx, cy + hy)
        alpha = np.clip(1.0 - dist, 0.0, 1.0)
        layers.append(lambda img, a=alpha, b=brightness: img + a * b)
    return layers


def _blob_layers(clean: np.ndarray, rng: Rng, count: int) -> List[Callable[[np.ndarray], np.ndarray]]:
    _, _, h, w = clean.shape
    xs, ys = _grid(h, w)
    layers = []
    for _ in range(count):
        radius = rng.uniform(0.03, 0.12) * min(h, w)
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        shift_x = int(round(rng.uniform(-radius, radius)))
        shift_y = int(round(rng.uniform(-radius, radius)))
        sign = 1.0 if rng.bernoulli(0.5) else -1.0
        offset = sign * rng.uniform(0.15, 0.35)
        alpha = np.clip(radius - np.hypot(xs - cx, ys - cy) + 0.5, 0.0, 1.0)

        def layer(img, a=alpha, sx=shift_x, sy=shift_y, o=offset):
            content = box_blur(np.roll(img, (sy, sx), axis=(2, 3)), 3) + o
            return (1.0 - a) * img + a * content

        layers.append(layer)
    return layers


def polygon_inside(quad: Sequence[Tuple[float, float]], h: int, w: int) -> np.ndarray:
    """Pixel centres strictly inside a convex polygon given as (x, y) vertices."""
    xs, ys = _grid(h, w)
    sides = []
    for (x0, y0), (x1, y1) in zip(quad, list(quad[1:]) + [quad[0]]):
        sides.append((x1 - x0) * (ys - y0) - (y1 - y0) * (xs - x0))
    sides = np.stack(sides)
    return np.all(sides > 0, axis=0) | np.all(sides < 0, axis=0)


def apply_shadow(image: np.ndarray, quads: Sequence[Sequence[Tuple[float, float]]],
                 factors: Sequence[float]) -> np.ndarray:
    """Multiplicative darkening inside each convex quad; overlaps keep the darkest factor."""
    _, _, h, w = image.shape
    scale = np.ones((h, w))
    for quad, factor in zip(quads, factors):
        scale = np.where(polygon_inside(quad, h, w), np.minimum(scale, factor), scale)
    return image * scale


def _shadow_layers(clean: np.ndarray, rng: Rng, count: int) -> List[Callable[[np.ndarray], np.ndarray]]:
    _, _, h, w = clean.shape
    layers = []
    for _ in range(count):
        cx, cy = rng.uniform(0.2 * w, 0.8 * w), rng.uniform(0.2 * h, 0.8 * h)
        angles = sorted(rng.uniform(0, 2 * math.pi) for _ in range(4))
        quad = [
            (cx + rng.uniform(0.1, 0.3) * w * math.cos(a), cy + rng.uniform(0.1, 0.3) * h * math.sin(a))
            for a in angles
        ]
        quad = _convex_hull(quad)
        factor = rng.uniform(0.3, 0.6)
        layers.append(lambda img, q=quad, f=factor: apply_shadow(img, [q], [f]))
    return layers


def _convex_hull(points: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
    """Monotone-chain hull; keeps the quad convex when a vertex falls inside."""
    pts = sorted(points)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _region_blur_layers(clean: np.ndarray, rng: Rng, count: int) -> List[Callable[[np.ndarray], np.ndarray]]:
    _, _, h, w = clean.shape
    xs, ys = _grid(h, w)
    k = rng.choice((5, 7, 9))
    layers = []
    for _ in range(count):
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        rx, ry = rng.uniform(0.1, 0.25) * w, rng.uniform(0.1, 0.25) * h
        edge = 3.0
        radial = np.hypot((xs - cx) / rx, (ys - cy) / ry)
        alpha = np.clip((1.0 - radial) * min(rx, ry) / edge, 0.0, 1.0)

        def layer(img, a=alpha):
            return (1.0 - a) * img + a * box_blur(img, k)

        layers.append(layer)
    return layers


# kind -> (primitive count range [lo, hi], layer factory)
FAMILIES: Dict[str, Tuple[Tuple[int, int], Callable]] = {
    "streak": ((5, 40), _streak_layers),
    "blob": ((2, 10), _blob_layers),
    "shadow": ((1, 3), _shadow_layers),
    "region_blur": ((1, 3), _region_blur_layers),
}


def degrade(clean: np.ndarray, kind: str, seed: int, severity: float = 1.0,
            tau: float = DEFAULT_MASK_THRESHOLD) -> Sample:
    """Apply one degradation family; primitives are added while the masked fraction stays <= 0.5."""
    if kind not in FAMILIES:
        raise ShapeError(f"unknown degradation kind {kind!r}; expected one of {', '.join(KINDS)}")
    if not 0.0 < severity <= 1.0:
        raise ShapeError(f"severity must lie in (0, 1], got {severity}")
    rng = Rng(seed)
    (lo, hi), factory = FAMILIES[kind]
    count = int(math.floor(severity * rng.integers(lo, hi + 1) + 0.5))

    base = clean.astype(np.float64)
    degraded = base
    for layer in factory(clean, rng, count):
        candidate = np.clip(layer(degraded), 0.0, 1.0)
        mask = gt_mask_from_pair(clean, candidate.astype(clean.dtype), tau)
        if mask.mean() > MAX_DEGRADED_FRACTION:
            break
        degraded = candidate

    degraded = degraded.astype(clean.dtype)
    gt_mask = gt_mask_from_pair(clean, degraded, tau)
    return Sample(clean=clean, degraded=degraded, gt_mask=gt_mask, kind=kind, seed=seed,
                  severity=severity)


def make_sample(entry: ManifestEntry, h: int, w: int, tau: float = DEFAULT_MASK_THRESHOLD) -> Sample:
    """Regenerate one sample from its manifest record."""
    rng = Rng(entry.seed)
    clean = gen_clean(h, w, rng.split())
    sample = degrade(clean, entry.kind, rng.split(), entry.severity, tau)
    sample.seed = entry.seed
    return sample


def plan_dataset(n: int, kinds: Sequence[str], seed: int, severity: float = 1.0) -> List[ManifestEntry]:
    """Per-sample seeds split from the master seed; kinds cycle in the given order."""
    if n < 1:
        raise ShapeError(f"dataset size must be >= 1, got {n}")
    master = Rng(seed)
    return [ManifestEntry(idx=i, kind=kinds[i % len(kinds)], seed=master.split(), severity=severity)
            for i in range(n)]


def make_dataset(n: int, kinds: Sequence[str], seed: int, h: int, w: int, severity: float = 1.0,
                 tau: float = DEFAULT_MASK_THRESHOLD, workers: Optional[int] = None
                 ) -> Tuple[List[Sample], List[ManifestEntry]]:
    manifest = plan_dataset(n, kinds, seed, severity)
    return generate_from_manifest(manifest, h, w, tau, workers), manifest


def generate_from_manifest(manifest: Sequence[ManifestEntry], h: int, w: int,
                           tau: float = DEFAULT_MASK_THRESHOLD,
                           workers: Optional[int] = None) -> List[Sample]:
    """Samples are independent, so the pool only changes wall time, never content."""
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(lambda e: make_sample(e, h, w, tau), manifest))
    else:
        samples = [make_sample(e, h, w, tau) for e in manifest]
    fractions = [float(s.gt_mask.mean()) for s in samples]
    logger.info("synth.dataset_generated", samples=len(samples), h=h, w=w,
                mean_masked_fraction=float(np.mean(fractions)))
    return samples
