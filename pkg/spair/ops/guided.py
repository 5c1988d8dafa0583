"""Distortion-guided operators: SFM, sparse convolution, SC block, SNL and the sparse 1x1.

Every op takes features as :class:`~spair.autodiff.tape.Variable` (or plain arrays) and a
binary (n, h, w) mask, and is differentiable with respect to features and weights. Masks
are constants. Locations with mask 0 come back bitwise equal to the input features
(the fused features, for SFM).
"""
from dataclasses import dataclass, field
from typing import List, Literal, Tuple, Union

import numpy as np

from spair.autodiff import functional as F
from spair.autodiff.tape import Variable, as_variable, record
from spair.core.errors import EmptyRegionError, ShapeError
from spair.ops import cost
from spair.ops.tensor_core import EPS, ConvParams, as_mask, im2col

SourcePolicy = Literal["clean_only", "all_pixels"]
Direction = Literal["left", "right", "up", "down"]
DIRECTIONS: Tuple[Direction, ...] = ("left", "right", "up", "down")

ConvLike = Union[ConvParams, Tuple[Variable, Variable]]


def _conv_parts(conv: ConvLike) -> Tuple[Variable, Variable]:
    if isinstance(conv, ConvParams):
        return as_variable(conv.weights), as_variable(conv.bias)
    weight, bias = conv
    return as_variable(weight), as_variable(bias)


def _grid_mask(x: Variable, mask) -> np.ndarray:
    n, _, h, w = x.shape
    return as_mask(mask, (n, h, w))


def _region_stats(x: Variable, weights: np.ndarray, counts: np.ndarray) -> Tuple[Variable, Variable]:
    """Mean/std per (sample, channel) over ``weights`` (n, 1, h, w); ``counts`` must be > 0."""
    mu = F.div(F.sum(F.mul(x, weights), axis=(2, 3), keepdims=True), counts)
    centered = F.mul(F.sub(x, mu), weights)
    var = F.div(F.sum(F.square(centered), axis=(2, 3), keepdims=True), counts)
    return mu, F.sqrt(F.add(var, EPS))


def masked_stats(x, mask) -> Tuple[Variable, Variable]:
    """Differentiable masked mean/std, each shaped (n, c)."""
    x = as_variable(x)
    m = _grid_mask(x, mask)
    counts = m.sum(axis=(1, 2)).astype(x.dtype)[:, None, None, None]
    if np.any(counts == 0):
        raise EmptyRegionError("masked_stats: empty region (mask has no 1 entries)")
    mu, sd = _region_stats(x, m[:, None].astype(x.dtype), counts)
    n, c = x.shape[:2]
    return F.reshape(mu, (n, c)), F.reshape(sd, (n, c))


def sfm_modulate(feat, loc_feat, mask) -> Variable:
    """Spatial feature modulation.

    The fused map F' = feat + loc_feat is re-normalised at degraded pixels so that their
    per-channel mean/std match the clean pixels' statistics. Samples whose degraded or
    clean region is empty get F' back unchanged.
    """
    feat, loc_feat = as_variable(feat), as_variable(loc_feat)
    if feat.shape != loc_feat.shape:
        raise ShapeError(f"sfm_modulate: feature shapes differ {feat.shape} vs {loc_feat.shape}")
    m = _grid_mask(feat, mask)
    fused = F.add(feat, loc_feat)

    deg = m[:, None].astype(feat.dtype)
    clean = 1.0 - deg
    n_deg = deg.sum(axis=(2, 3), keepdims=True)
    n_clean = clean.sum(axis=(2, 3), keepdims=True)
    valid = (n_deg > 0) & (n_clean > 0)
    if not valid.any():
        return fused

    mu_d, sd_d = _region_stats(fused, deg, np.maximum(n_deg, 1))
    mu_c, sd_c = _region_stats(fused, clean, np.maximum(n_clean, 1))
    normalized = F.div(F.sub(F.mul(fused, deg), mu_d), sd_d)
    modulated = F.add(F.mul(sd_c, normalized), mu_c)
    return F.where((deg > 0) & valid, modulated, fused)


def sparse_conv(feat, mask, params: ConvLike) -> Variable:
    """Mask-guided convolution evaluated only at mask-1 outputs over mask-1 neighbours.

    Output is 0 wherever the mask is 0; clean and out-of-bounds neighbours contribute
    nothing and no renormalisation by the number of valid taps is applied.
    """
    x = as_variable(feat)
    weight, bias = _conv_parts(params)
    n, c, h, w = x.shape
    c_out, c_in, k, _ = weight.shape
    if k % 2 == 0:
        raise ShapeError(f"sparse_conv: kernel size must be odd, got {k}")
    if c != c_in:
        raise ShapeError(f"sparse_conv: input has {c} channels, kernel expects {c_in}")
    m = _grid_mask(x, mask)
    pad = (k - 1) // 2
    gate = m[:, None].astype(x.dtype)

    ni, ii, ji = np.nonzero(m)
    cols = im2col(x.value * gate, k, 1, pad)[ni, :, ii, ji]  # (P, c, k, k)
    picked = np.tensordot(cols, weight.value, axes=([1, 2, 3], [1, 2, 3])) + bias.value
    out = np.zeros((n, c_out, h, w), dtype=x.dtype)
    out[ni, :, ii, ji] = picked
    if cost.counting():
        cost.record("sparse_conv", cost.sparse_conv_macs(m, k, c_in, c_out))

    def vjp(g):
        g_picked = g[ni, :, ii, ji]  # (P, c_out)
        d_weight = np.tensordot(g_picked, cols, axes=([0], [0]))
        d_bias = g_picked.sum(axis=0)
        d_cols = np.tensordot(g_picked, weight.value, axes=([1], [0]))  # (P, c, k, k)
        d_pad = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
        chan = np.arange(c)[None, :]
        for a in range(k):
            for b in range(k):
                np.add.at(d_pad, (ni[:, None], chan, (ii + a)[:, None], (ji + b)[:, None]),
                          d_cols[:, :, a, b])
        d_x = d_pad[:, :, pad:pad + h, pad:pad + w] * gate
        return d_x, d_weight, d_bias

    return record(out, (x, weight, bias), vjp, "sparse_conv")


def sparse_pointwise(feat, mask, weight, bias) -> Variable:
    """Fully-connected channel mixing over the gathered mask-1 points, scattered back.

    Mask-0 locations keep their input values, so the weight must be square.
    """
    x = as_variable(feat)
    weight, bias = as_variable(weight), as_variable(bias)
    c = x.shape[1]
    if weight.shape != (c, c) or bias.shape != (c,):
        raise ShapeError(
            f"sparse_pointwise: expected weight ({c}, {c}) and bias ({c},), "
            f"got {weight.shape} and {bias.shape}"
        )
    m = _grid_mask(x, mask)
    ni, ii, ji = np.nonzero(m)
    points = x.value[ni, :, ii, ji]  # (P, c)
    out = x.value.copy()
    out[ni, :, ii, ji] = points @ weight.value.T + bias.value
    if cost.counting():
        cost.record("sparse_pointwise", cost.sparse_pointwise_macs(m, c, c))

    def vjp(g):
        g_points = g[ni, :, ii, ji]
        d_x = g.copy()
        d_x[ni, :, ii, ji] = g_points @ weight.value
        return d_x, g_points.T @ points, g_points.sum(axis=0)

    return record(out, (x, weight, bias), vjp, "sparse_pointwise")


def masked_attention(seq, admissible: np.ndarray, op: str = "attention") -> Variable:
    """Softmax attention over sequences ``seq`` (B, C, L).

    ``admissible[b, q, s]`` says whether position s may serve as a source for query q.
    Scores are channel inner products; a query with no admissible source gets a zero
    vector. Returns the attended features (B, C, L).
    """
    x = as_variable(seq)
    X = x.value
    A = np.asarray(admissible, dtype=bool)
    if A.shape != (X.shape[0], X.shape[2], X.shape[2]):
        raise ShapeError(f"{op}: admissibility {A.shape} does not match sequence {X.shape}")

    scores = np.matmul(X.transpose(0, 2, 1), X)  # (B, L, L)
    row_max = np.where(A, scores, -np.inf).max(axis=-1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    z = np.where(A, np.exp(np.where(A, scores - row_max, 0.0)), 0.0)
    denom = z.sum(axis=-1, keepdims=True)
    probs = (z / np.where(denom > 0, denom, 1.0)).astype(X.dtype)
    out = np.matmul(X, probs.transpose(0, 2, 1))
    if cost.counting():
        cost.record(op, cost.attention_macs(A, X.shape[1]))

    def vjp(g):
        d_probs = np.matmul(g.transpose(0, 2, 1), X)
        d_x = np.matmul(g, probs)
        d_scores = probs * (d_probs - (probs * d_probs).sum(axis=-1, keepdims=True))
        d_x = d_x + np.matmul(X, d_scores.transpose(0, 2, 1)) + np.matmul(X, d_scores)
        return (d_x,)

    return record(out, (x,), vjp, op)


def _scan_admissibility(query: np.ndarray, source: np.ndarray, forward: bool) -> np.ndarray:
    """(B, L) query/source flags -> (B, L, L) admissibility for one scan direction."""
    idx = np.arange(query.shape[1])
    beyond = idx[None, :] > idx[:, None] if forward else idx[None, :] < idx[:, None]
    return beyond[None] & query[:, :, None] & source[:, None, :]


def directional_aggregate(feat, query: np.ndarray, source: np.ndarray, direction: Direction) -> Variable:
    """g^k for every pixel: attention along the row (left/right) or column (up/down).

    Sources lie strictly beyond the query in the scan direction. Non-query pixels get zeros.
    """
    x = as_variable(feat)
    n, c, h, w = x.shape
    if direction in ("left", "right"):
        axes, length, rows = (0, 2, 1, 3), w, n * h
        q, s = query.reshape(rows, length), source.reshape(rows, length)
    else:
        axes, length, rows = (0, 3, 1, 2), h, n * w
        q = query.transpose(0, 2, 1).reshape(rows, length)
        s = source.transpose(0, 2, 1).reshape(rows, length)
    seq = F.reshape(F.transpose(x, axes), (rows, c, length))
    admissible = _scan_admissibility(q, s, forward=direction in ("right", "down"))
    attended = masked_attention(seq, admissible, op="snl_attention")
    inverse = tuple(np.argsort(axes))
    return F.transpose(F.reshape(attended, (n, x.shape[axes[1]], c, length)), inverse)


def snl_step(feat, mask, source_policy: SourcePolicy, fusion: ConvLike) -> Variable:
    """One sparse non-local step.

    Each degraded pixel gathers four directional contexts g^k and combines them with
    per-pixel weights E = conv(feat) (4 channels, no normalisation across directions).
    Output is feat + h at degraded pixels and feat elsewhere.
    """
    x = as_variable(feat)
    weight, bias = _conv_parts(fusion)
    if weight.shape[0] != len(DIRECTIONS):
        raise ShapeError(f"snl_step: fusion conv must produce 4 channels, got {weight.shape[0]}")
    if source_policy not in ("clean_only", "all_pixels"):
        raise ShapeError(f"snl_step: unknown source policy {source_policy!r}")
    m = _grid_mask(x, mask)
    query = m == 1
    if not query.any():
        return x
    source = ~query if source_policy == "clean_only" else np.ones_like(query)

    fusion_weights = F.conv2d(x, weight, bias)
    combined = None
    for k, direction in enumerate(DIRECTIONS):
        g = directional_aggregate(x, query, source, direction)
        term = F.mul(F.take_channels(fusion_weights, k, k + 1), g)
        combined = term if combined is None else F.add(combined, term)
    return F.where(query[:, None], F.add(x, combined), x)


@dataclass
class ScBlock:
    """Densely connected guided sparse convolutions followed by a 1x1 reduction.

    ``layers[i]`` consumes the concatenation of the block input and all previous outputs.
    """
    layers: List[Tuple[Variable, Variable]]
    reduce: Tuple[Variable, Variable]
    slope: float = 0.2


def sc_block_forward(feat, mask, block: ScBlock) -> Variable:
    x = as_variable(feat)
    m = _grid_mask(x, mask)
    c = x.shape[1]
    if block.layers and block.layers[0][0].shape[1] != c:
        raise ShapeError(f"sc_block: block expects {block.layers[0][0].shape[1]} channels, got {c}")
    if block.reduce[0].shape[0] != c:
        raise ShapeError(f"sc_block: reduction produces {block.reduce[0].shape[0]} channels, input has {c}")
    if not m.any():
        return x
    features = [x]
    for weight, bias in block.layers:
        inp = features[0] if len(features) == 1 else F.concat(features, axis=1)
        features.append(F.leaky_relu(sparse_conv(inp, m, (weight, bias)), block.slope))
    branch = F.conv2d(F.concat(features, axis=1), *block.reduce)
    return F.where(m[:, None] == 1, F.add(x, branch), x)


@dataclass
class SnlModule:
    """Two structurally identical attention steps joined by a sparse 1x1 convolution."""
    fusion1: Tuple[Variable, Variable]
    pointwise: Tuple[Variable, Variable]
    fusion2: Tuple[Variable, Variable]
    policy: SourcePolicy = field(default="clean_only")


def snl_module_forward(feat, mask, module: SnlModule) -> Variable:
    x = snl_step(feat, mask, "clean_only", module.fusion1)
    x = sparse_pointwise(x, mask, *module.pointwise)
    return snl_step(x, mask, module.policy, module.fusion2)


def global_nonlocal(feat, out_proj: Tuple[Variable, Variable]) -> Variable:
    """Unmasked non-local layer: every pixel attends over all H*W positions."""
    x = as_variable(feat)
    n, c, h, w = x.shape
    admissible = np.ones((n, h * w, h * w), dtype=bool)
    attended = masked_attention(F.reshape(x, (n, c, h * w)), admissible, op="nonlocal_attention")
    return F.add(x, F.conv2d(F.reshape(attended, (n, c, h, w)), *out_proj))
