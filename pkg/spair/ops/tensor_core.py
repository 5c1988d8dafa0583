"""Dense tensor substrate.

Tensors are rank-4 numpy arrays laid out (n, c, h, w) in row-major order; masks are
rank-3 (n, h, w) arrays holding exactly 0 or 1 in the tensor dtype. Everything here is a
pure function of its inputs and never mutates an argument.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from spair.core.errors import EmptyRegionError, ShapeError

EPS = 1e-5
DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


def as_tensor4(x, name: str = "input") -> np.ndarray:
    """Validate a dense (n, c, h, w) tensor and return it as an ndarray."""
    arr = np.asarray(x)
    if arr.ndim != 4:
        raise ShapeError(f"{name}: expected rank-4 (n, c, h, w) tensor, got shape {arr.shape}")
    if arr.dtype not in DTYPES:
        raise ShapeError(f"{name}: dtype must be float32 or float64, got {arr.dtype}")
    return arr


def as_mask(mask, spatial: Optional[Tuple[int, int, int]] = None, name: str = "mask") -> np.ndarray:
    """Validate a binary (n, h, w) mask, optionally against an (n, h, w) feature grid."""
    arr = np.asarray(mask)
    if arr.ndim != 3:
        raise ShapeError(f"{name}: expected rank-3 (n, h, w) mask, got shape {arr.shape}")
    if spatial is not None and arr.shape != tuple(spatial):
        raise ShapeError(f"{name}: resolution {arr.shape} does not match feature grid {tuple(spatial)}")
    if not np.all((arr == 0) | (arr == 1)):
        raise ShapeError(f"{name}: values must be exactly 0 or 1")
    return arr


def check_same(a: np.ndarray, b: np.ndarray, what: str = "operands") -> None:
    """Two-tensor arithmetic requires identical shape and dtype."""
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")
    if a.dtype != b.dtype:
        raise ShapeError(f"{what}: dtype mismatch {a.dtype} vs {b.dtype}")


@dataclass(frozen=True)
class ConvParams:
    """Convolution weights (C_out, C_in, k, k), bias (C_out,), stride and zero padding."""
    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights)
        b = np.asarray(self.bias)
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise ShapeError(f"conv weights must be (C_out, C_in, k, k), got {w.shape}")
        if w.shape[2] % 2 == 0:
            raise ShapeError(f"kernel size must be odd, got {w.shape[2]}")
        if b.shape != (w.shape[0],):
            raise ShapeError(f"bias shape {b.shape} does not match C_out={w.shape[0]}")
        if self.stride < 1 or self.padding < 0:
            raise ShapeError(f"invalid stride={self.stride} / padding={self.padding}")

    @classmethod
    def same(cls, weights, bias) -> "ConvParams":
        """Stride 1 with the padding that keeps the output resolution."""
        k = np.asarray(weights).shape[-1]
        return cls(weights=weights, bias=bias, stride=1, padding=(k - 1) // 2)

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def im2col(x: np.ndarray, k: int, stride: int, padding: int) -> np.ndarray:
    """Strided view of receptive fields: (n, c, out_h, out_w, k, k)."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(x, (k, k), axis=(2, 3))
    return windows[:, :, ::stride, ::stride]


def conv2d_dense(input, params: ConvParams) -> np.ndarray:
    """Zero-padded 2-D cross-correlation plus bias."""
    x = as_tensor4(input)
    if x.shape[1] != params.in_channels:
        raise ShapeError(
            f"conv2d_dense: input has {x.shape[1]} channels, kernel expects {params.in_channels}"
        )
    k = params.kernel_size
    if x.shape[2] + 2 * params.padding < k or x.shape[3] + 2 * params.padding < k:
        raise ShapeError(f"conv2d_dense: input {x.shape[2:]} smaller than kernel {k}")
    cols = im2col(x, k, params.stride, params.padding)
    w = np.asarray(params.weights, dtype=x.dtype)
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))  # (n, oh, ow, C_out)
    out = out.transpose(0, 3, 1, 2) + np.asarray(params.bias, dtype=x.dtype)[None, :, None, None]
    return np.ascontiguousarray(out)


def masked_stats(input, mask) -> Tuple[np.ndarray, np.ndarray]:
    """Per-(sample, channel) mean and std over the pixels where ``mask`` is 1.

    Returns two (n, c) arrays; std = sqrt(E_M[(Q - mean)^2] + EPS).
    """
    q = as_tensor4(input)
    m = as_mask(mask, (q.shape[0], q.shape[2], q.shape[3]))
    counts = m.sum(axis=(1, 2))
    if np.any(counts == 0):
        raise EmptyRegionError("masked_stats: empty region (mask has no 1 entries)")
    weights = m[:, None, :, :].astype(q.dtype)
    denom = counts.astype(q.dtype)[:, None]
    mean = (q * weights).sum(axis=(2, 3)) / denom
    centered = (q - mean[:, :, None, None]) * weights
    var = (centered * centered).sum(axis=(2, 3)) / denom
    return mean, np.sqrt(var + EPS)


def softmax(scores) -> np.ndarray:
    """Numerically stable softmax over a 1-D score vector."""
    s = np.asarray(scores)
    if s.dtype.kind != "f":
        s = s.astype(np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ShapeError("empty softmax: scores must be a non-empty 1-D list")
    z = np.exp(s - s.max())
    return z / z.sum()


def downsample_mask(mask, factor: int) -> np.ndarray:
    """Max-pool a mask by a power-of-two factor: a coarse cell is 1 iff any covered cell is 1."""
    m = as_mask(mask)
    if factor < 1 or factor & (factor - 1):
        raise ShapeError(f"downsample factor must be a power of two, got {factor}")
    n, h, w = m.shape
    if h % factor or w % factor:
        raise ShapeError(f"mask {h}x{w} is not divisible by factor {factor}")
    if factor == 1:
        return m.copy()
    return m.reshape(n, h // factor, factor, w // factor, factor).max(axis=(2, 4))
