"""Forward passes shared by training validation, evaluation and ``infer``."""
from dataclasses import dataclass
from typing import List, Literal, Optional

import numpy as np

from spair.autodiff import functional as F
from spair.autodiff.tape import Variable
from spair.core.errors import ConfigError
from spair.models.networks import (
    LocalizationNet,
    RestorationNet,
    binarize,
    forward_localize,
    forward_restore,
)

MaskSource = Literal["predicted", "gt"]


@dataclass
class Guidance:
    """What a frozen Net_L hands to Net_R for one batch."""
    prob: np.ndarray  # (n, 1, h, w)
    mask: np.ndarray  # (n, h, w) mask fed to Net_R
    features: List[Variable]


def guidance(net_l: Optional[LocalizationNet], degraded: np.ndarray, mask_source: MaskSource = "predicted",
             gt_mask: Optional[np.ndarray] = None, threshold: float = 0.5) -> Guidance:
    """Run Net_L with its outputs detached; ``mask_source="gt"`` swaps in the ground-truth mask."""
    n, _, h, w = degraded.shape
    if net_l is None:
        mask = gt_mask if mask_source == "gt" and gt_mask is not None else np.zeros((n, h, w), degraded.dtype)
        return Guidance(prob=np.zeros((n, 1, h, w), degraded.dtype), mask=mask, features=[])
    prob, features = forward_localize(net_l, degraded)
    features = [F.detach(f) for f in features]
    if mask_source == "gt":
        if gt_mask is None:
            raise ConfigError("mask_source=gt needs the ground-truth mask")
        mask = np.asarray(gt_mask, dtype=degraded.dtype)
    else:
        mask = binarize(prob, threshold)
    return Guidance(prob=prob.value, mask=mask, features=features)


def restore(net_r: RestorationNet, net_l: Optional[LocalizationNet], degraded: np.ndarray,
            mask_source: MaskSource = "predicted", gt_mask: Optional[np.ndarray] = None,
            threshold: float = 0.5):
    """Restored image (ndarray) and the guidance that produced it."""
    guide = guidance(net_l, degraded, mask_source, gt_mask, threshold)
    loc = guide.features if net_r.spec.has_sfm else None
    mask = guide.mask if net_r.uses_mask else None
    out = forward_restore(net_r, degraded, mask, loc)
    return out.value, guide
