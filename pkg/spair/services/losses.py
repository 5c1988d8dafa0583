"""Training objectives and ground-truth mask construction."""
import numpy as np

from spair.autodiff import functional as F
from spair.autodiff.tape import Variable
from spair.core.errors import ShapeError
from spair.ops.tensor_core import as_tensor4

DEFAULT_MASK_THRESHOLD = 0.1


def gt_mask_from_pair(clean, degraded, tau: float = DEFAULT_MASK_THRESHOLD) -> np.ndarray:
    """1 where the largest per-channel absolute difference exceeds ``tau``."""
    c = as_tensor4(clean, "clean")
    d = as_tensor4(degraded, "degraded")
    if c.shape != d.shape:
        raise ShapeError(f"gt_mask_from_pair: shape mismatch {c.shape} vs {d.shape}")
    diff = np.abs(d.astype(np.float64) - c.astype(np.float64)).max(axis=1)
    return (diff > tau).astype(c.dtype)


def loss_l1(pred, target) -> Variable:
    return F.l1_loss(pred, target)


def loss_bce(prob, target_mask) -> Variable:
    return F.bce_loss(prob, target_mask)
