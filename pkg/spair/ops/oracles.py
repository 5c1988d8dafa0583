"""Naive loop implementations used as references for the vectorised kernels.

These are deliberately written element by element with Python loops and share no code
with the fast paths beyond the mask/shape conventions.
"""
import math
from typing import List, Sequence, Tuple

import numpy as np

from spair.ops.tensor_core import EPS

DIRECTION_STEPS = {"left": (0, -1), "right": (0, 1), "up": (-1, 0), "down": (1, 0)}


def conv2d_loop(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int = 1,
                padding: int = 0) -> np.ndarray:
    n, c_in, h, w = x.shape
    c_out, _, k, _ = weight.shape
    oh = (h + 2 * padding - k) // stride + 1
    ow = (w + 2 * padding - k) // stride + 1
    out = np.zeros((n, c_out, oh, ow), dtype=np.float64)
    for b in range(n):
        for o in range(c_out):
            for i in range(oh):
                for j in range(ow):
                    acc = float(bias[o])
                    for c in range(c_in):
                        for a in range(k):
                            for d in range(k):
                                y = i * stride + a - padding
                                z = j * stride + d - padding
                                if 0 <= y < h and 0 <= z < w:
                                    acc += weight[o, c, a, d] * x[b, c, y, z]
                    out[b, o, i, j] = acc
    return out


def sparse_conv_loop(x: np.ndarray, mask: np.ndarray, weight: np.ndarray,
                     bias: np.ndarray) -> np.ndarray:
    n, c_in, h, w = x.shape
    c_out, _, k, _ = weight.shape
    r = (k - 1) // 2
    out = np.zeros((n, c_out, h, w), dtype=np.float64)
    for b in range(n):
        for i in range(h):
            for j in range(w):
                if mask[b, i, j] != 1:
                    continue
                for o in range(c_out):
                    acc = float(bias[o])
                    for a in range(-r, r + 1):
                        for d in range(-r, r + 1):
                            y, z = i + a, j + d
                            if not (0 <= y < h and 0 <= z < w) or mask[b, y, z] != 1:
                                continue
                            for c in range(c_in):
                                acc += weight[o, c, a + r, d + r] * x[b, c, y, z]
                    out[b, o, i, j] = acc
    return out


def masked_stats_loop(x: np.ndarray, mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    n, c, h, w = x.shape
    mean = np.zeros((n, c))
    std = np.zeros((n, c))
    for b in range(n):
        pixels = [(i, j) for i in range(h) for j in range(w) if mask[b, i, j] == 1]
        for ch in range(c):
            values = [x[b, ch, i, j] for i, j in pixels]
            mu = math.fsum(values) / len(values)
            var = math.fsum((v - mu) ** 2 for v in values) / len(values)
            mean[b, ch] = mu
            std[b, ch] = math.sqrt(var + EPS)
    return mean, std


def sparse_pointwise_loop(x: np.ndarray, mask: np.ndarray, weight: np.ndarray,
                          bias: np.ndarray) -> np.ndarray:
    out = np.array(x, dtype=np.float64, copy=True)
    n, c, h, w = x.shape
    for b in range(n):
        for i in range(h):
            for j in range(w):
                if mask[b, i, j] != 1:
                    continue
                for o in range(c):
                    out[b, o, i, j] = bias[o] + sum(weight[o, q] * x[b, q, i, j] for q in range(c))
    return out


def snl_step_loop(x: np.ndarray, mask: np.ndarray, source_policy: str, fusion_weight: np.ndarray,
                  fusion_bias: np.ndarray) -> np.ndarray:
    """Loops over every (query, direction, source) triple."""
    n, c, h, w = x.shape
    k = fusion_weight.shape[-1]
    e = conv2d_loop(x, fusion_weight, fusion_bias, 1, (k - 1) // 2)
    out = np.array(x, dtype=np.float64, copy=True)
    for b in range(n):
        for i in range(h):
            for j in range(w):
                if mask[b, i, j] != 1:
                    continue
                query = x[b, :, i, j]
                total = np.zeros(c)
                for kk, (di, dj) in enumerate(DIRECTION_STEPS.values()):
                    sources: List[np.ndarray] = []
                    y, z = i + di, j + dj
                    while 0 <= y < h and 0 <= z < w:
                        if source_policy == "all_pixels" or mask[b, y, z] == 0:
                            sources.append(x[b, :, y, z])
                        y, z = y + di, z + dj
                    if not sources:
                        continue
                    scores = [float(np.dot(query, s)) for s in sources]
                    top = max(scores)
                    exps = [math.exp(s - top) for s in scores]
                    norm = math.fsum(exps)
                    g = np.zeros(c)
                    for weight, s in zip(exps, sources):
                        g += (weight / norm) * s
                    total += e[b, kk, i, j] * g
                out[b, :, i, j] = x[b, :, i, j] + total
    return out


def snl_module_loop(x: np.ndarray, mask: np.ndarray, fusion1: Sequence[np.ndarray],
                    pointwise: Sequence[np.ndarray], fusion2: Sequence[np.ndarray],
                    policy: str = "clean_only") -> np.ndarray:
    y = snl_step_loop(x, mask, "clean_only", *fusion1)
    y = sparse_pointwise_loop(y, mask, *pointwise)
    return snl_step_loop(y, mask, policy, *fusion2)


def sc_block_loop(x: np.ndarray, mask: np.ndarray, layers: Sequence[Tuple[np.ndarray, np.ndarray]],
                  reduce: Tuple[np.ndarray, np.ndarray], slope: float = 0.2) -> np.ndarray:
    features = [np.asarray(x, dtype=np.float64)]
    for weight, bias in layers:
        y = sparse_conv_loop(np.concatenate(features, axis=1), mask, weight, bias)
        features.append(np.where(y > 0, y, slope * y))
    branch = conv2d_loop(np.concatenate(features, axis=1), reduce[0], reduce[1])
    return np.where(mask[:, None] == 1, features[0] + branch, features[0])


def l1_loop(pred: np.ndarray, target: np.ndarray) -> float:
    flat_p, flat_t = pred.ravel(), target.ravel()
    return math.fsum(abs(float(a) - float(b)) for a, b in zip(flat_p, flat_t)) / flat_p.size


def bce_loop(prob: np.ndarray, target: np.ndarray) -> float:
    flat_p, flat_t = prob.ravel(), target.ravel()
    total = 0.0
    for p, y in zip(flat_p, flat_t):
        p = min(max(float(p), 1e-7), 1.0 - 1e-7)
        total += -(y * math.log(p) + (1 - y) * math.log(1 - p))
    return total / flat_p.size
