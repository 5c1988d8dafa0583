"""Differentiable primitives with their vector-Jacobian products.

Elementwise binary ops accept numpy-broadcastable operands (per-channel statistics against
feature maps); the backward pass sums gradients back to each operand's shape.
"""
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from spair.autodiff.tape import Variable, as_variable, record
from spair.core.errors import ShapeError
from spair.ops import cost
from spair.ops.tensor_core import conv_output_size, im2col

Operand = Union[Variable, np.ndarray, float, int]


def _lift(x: Operand, like: Optional[Variable] = None) -> Variable:
    if isinstance(x, Variable):
        return x
    arr = np.asarray(x)
    if like is not None and arr.dtype != like.dtype:
        arr = arr.astype(like.dtype)
    return Variable(arr)


def _pair(a: Operand, b: Operand) -> Tuple[Variable, Variable]:
    if isinstance(a, Variable):
        return a, _lift(b, a)
    b = as_variable(b)
    return _lift(a, b), b


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a: Operand, b: Operand) -> Variable:
    a, b = _pair(a, b)

    def vjp(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return record(a.value + b.value, (a, b), vjp, "add")


def sub(a: Operand, b: Operand) -> Variable:
    a, b = _pair(a, b)

    def vjp(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return record(a.value - b.value, (a, b), vjp, "sub")


def mul(a: Operand, b: Operand) -> Variable:
    a, b = _pair(a, b)

    def vjp(g):
        return unbroadcast(g * b.value, a.shape), unbroadcast(g * a.value, b.shape)

    return record(a.value * b.value, (a, b), vjp, "mul")


def div(a: Operand, b: Operand) -> Variable:
    a, b = _pair(a, b)
    out = a.value / b.value

    def vjp(g):
        return unbroadcast(g / b.value, a.shape), unbroadcast(-g * out / b.value, b.shape)

    return record(out, (a, b), vjp, "div")


def scale(x: Variable, s: float) -> Variable:
    x = as_variable(x)
    return record(x.value * s, (x,), lambda g: (g * s,), "scale")


def square(x: Variable) -> Variable:
    x = as_variable(x)
    return record(x.value * x.value, (x,), lambda g: (2.0 * g * x.value,), "square")


def sqrt(x: Variable) -> Variable:
    x = as_variable(x)
    out = np.sqrt(x.value)
    return record(out, (x,), lambda g: (g / (2.0 * out),), "sqrt")


def abs(x: Variable) -> Variable:  # noqa: A001
    x = as_variable(x)
    return record(np.abs(x.value), (x,), lambda g: (g * np.sign(x.value),), "abs")


def log(x: Variable) -> Variable:
    x = as_variable(x)
    return record(np.log(x.value), (x,), lambda g: (g / x.value,), "log")


def clip(x: Variable, lo: float, hi: float) -> Variable:
    """Clamp with zero gradient outside [lo, hi]."""
    x = as_variable(x)
    inside = (x.value >= lo) & (x.value <= hi)
    return record(np.clip(x.value, lo, hi), (x,), lambda g: (g * inside,), "clip")


def leaky_relu(x: Variable, slope: float = 0.2) -> Variable:
    x = as_variable(x)
    factor = np.where(x.value > 0, 1.0, slope).astype(x.dtype)
    return record(x.value * factor, (x,), lambda g: (g * factor,), "leaky_relu")


def sigmoid(x: Variable) -> Variable:
    x = as_variable(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    return record(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def sum(x: Variable, axis=None, keepdims: bool = False) -> Variable:  # noqa: A001
    x = as_variable(x)
    out = x.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),)

    return record(np.asarray(out), (x,), vjp, "sum")


def mean(x: Variable, axis=None, keepdims: bool = False) -> Variable:
    x = as_variable(x)
    count = x.value.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Variable, shape: Tuple[int, ...]) -> Variable:
    x = as_variable(x)
    return record(x.value.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Variable, axes: Tuple[int, ...]) -> Variable:
    x = as_variable(x)
    inverse = tuple(np.argsort(axes))
    return record(
        np.ascontiguousarray(x.value.transpose(axes)), (x,),
        lambda g: (np.ascontiguousarray(g.transpose(inverse)),), "transpose",
    )


def concat(xs: Sequence[Variable], axis: int = 1) -> Variable:
    xs = [as_variable(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(part) for part in np.split(g, splits, axis=axis))

    return record(np.concatenate([x.value for x in xs], axis=axis), xs, vjp, "concat")


def take_channels(x: Variable, start: int, stop: int) -> Variable:
    x = as_variable(x)

    def vjp(g):
        full = np.zeros_like(x.value)
        full[:, start:stop] = g
        return (full,)

    return record(np.ascontiguousarray(x.value[:, start:stop]), (x,), vjp, "take_channels")


def where(cond: np.ndarray, a: Operand, b: Operand) -> Variable:
    """Select ``a`` where ``cond`` holds, else ``b``; ``cond`` is a constant."""
    a, b = _pair(a, b)
    cond = np.asarray(cond, dtype=bool)
    zero = np.zeros((), dtype=a.dtype)

    def vjp(g):
        return (
            unbroadcast(np.where(cond, g, zero), a.shape),
            unbroadcast(np.where(cond, zero, g), b.shape),
        )

    return record(np.where(cond, a.value, b.value), (a, b), vjp, "where")


def detach(x: Operand) -> Variable:
    """Same value, no gradient path back to ``x``."""
    return Variable(as_variable(x).value)


def softmax(x: Variable, axis: int = -1) -> Variable:
    x = as_variable(x)
    z = np.exp(x.value - x.value.max(axis=axis, keepdims=True))
    out = z / z.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record(out, (x,), vjp, "softmax")


def conv2d(
    x: Variable,
    weight: Variable,
    bias: Optional[Variable] = None,
    stride: int = 1,
    padding: Optional[int] = None,
) -> Variable:
    """Dense zero-padded convolution; ``padding=None`` keeps the resolution at stride 1."""
    x, weight = as_variable(x), as_variable(weight)
    n, c, h, w = x.shape
    c_out, c_in, k, _ = weight.shape
    if c != c_in:
        raise ShapeError(f"conv2d: input has {c} channels, kernel expects {c_in}")
    if k % 2 == 0:
        raise ShapeError(f"conv2d: kernel size must be odd, got {k}")
    pad = (k - 1) // 2 if padding is None else padding
    oh, ow = conv_output_size(h, k, stride, pad), conv_output_size(w, k, stride, pad)
    cols = im2col(x.value, k, stride, pad)
    out = np.tensordot(cols, weight.value, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        bias = as_variable(bias)
        out = out + bias.value[None, :, None, None]
    out = np.ascontiguousarray(out)
    if cost.counting():
        cost.record("conv2d_dense", cost.dense_conv_macs(n, h, w, k, c_in, c_out, stride, pad))

    def vjp(g):
        d_weight = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))
        d_cols = np.tensordot(g, weight.value, axes=([1], [0]))  # (n, oh, ow, c, k, k)
        d_pad = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                d_pad[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += (
                    d_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                )
        d_x = np.ascontiguousarray(d_pad[:, :, pad:pad + h, pad:pad + w])
        grads = [d_x, d_weight]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return record(out, parents, vjp, "conv2d")


def upsample_nearest(x: Variable, factor: int = 2) -> Variable:
    x = as_variable(x)
    n, c, h, w = x.shape
    out = x.value.repeat(factor, axis=2).repeat(factor, axis=3)

    def vjp(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return record(out, (x,), vjp, "upsample_nearest")


def l1_loss(pred: Variable, target: Operand) -> Variable:
    """Mean absolute error over all elements."""
    pred = as_variable(pred)
    target = _lift(target, pred)
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss: shape mismatch {pred.shape} vs {target.shape}")
    return mean(abs(sub(pred, target)))


BCE_CLAMP = 1e-7


def bce_loss(prob: Variable, target_mask: np.ndarray) -> Variable:
    """Mean binary cross-entropy; probabilities are clamped to [1e-7, 1 - 1e-7]."""
    prob = as_variable(prob)
    y = np.asarray(target_mask, dtype=prob.dtype)
    if y.ndim == prob.value.ndim - 1:
        y = y[:, None]
    if y.shape != prob.shape:
        raise ShapeError(f"bce_loss: target shape {y.shape} does not match {prob.shape}")
    p = clip(prob, BCE_CLAMP, 1.0 - BCE_CLAMP)
    terms = add(mul(y, log(p)), mul(1.0 - y, log(sub(1.0, p))))
    return scale(mean(terms), -1.0)
