"""Image-quality and mask-quality metrics.

PSNR is computed in float64 over selected pixels; SSIM is the standard Gaussian-window form
from scikit-image (11x11, sigma 1.5, K1=0.01, K2=0.03, data range 1.0) averaged over channels
and samples.
"""
import math
from typing import Optional, Tuple

import numpy as np
from skimage.metrics import structural_similarity

from spair.core.errors import EmptyRegionError, ShapeError
from spair.ops.tensor_core import as_mask, as_tensor4
from spair.schemas.reports import QualityReport

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
Y_WEIGHTS = np.array([0.299, 0.587, 0.114])


def to_y(image) -> np.ndarray:
    """(n, 3, h, w) RGB -> (n, 1, h, w) luma."""
    x = as_tensor4(image, "image").astype(np.float64)
    if x.shape[1] != 3:
        raise ShapeError(f"Y conversion needs 3 channels, got {x.shape[1]}")
    return np.tensordot(Y_WEIGHTS, x, axes=([0], [1]))[:, None]


def _pair(a, b, y_channel: bool) -> Tuple[np.ndarray, np.ndarray]:
    x = as_tensor4(a, "a").astype(np.float64)
    y = as_tensor4(b, "b").astype(np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"metric inputs differ in shape: {x.shape} vs {y.shape}")
    if y_channel:
        x, y = to_y(x), to_y(y)
    return x, y


def mse(a, b, region=None, y_channel: bool = False) -> float:
    """Mean squared error over all channels of the selected pixels."""
    x, y = _pair(a, b, y_channel)
    sq = (x - y) ** 2
    if region is None:
        return float(sq.mean())
    n, c, h, w = x.shape
    m = as_mask(region, (n, h, w)) > 0
    count = int(m.sum())
    if count == 0:
        raise EmptyRegionError("psnr: region mask selects no pixels")
    return float(sq.transpose(1, 0, 2, 3)[:, m].sum() / (count * c))


def psnr_from_mse(value: float, peak: float = 1.0) -> float:
    if value <= 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(peak * peak / value))


def psnr(a, b, peak: float = 1.0, region=None, y_channel: bool = False) -> float:
    """PSNR in dB; identical inputs report the 99.0 dB sentinel."""
    return psnr_from_mse(mse(a, b, region, y_channel), peak)


def ssim(a, b, y_channel: bool = False) -> float:
    x, y = _pair(a, b, y_channel)
    n, c, h, w = x.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ShapeError(f"ssim: image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    scores = []
    for i in range(n):
        for ch in range(c):
            scores.append(structural_similarity(
                x[i, ch], y[i, ch],
                win_size=SSIM_WINDOW, gaussian_weights=True, sigma=SSIM_SIGMA,
                use_sample_covariance=False, data_range=1.0, K1=0.01, K2=0.03,
            ))
    return float(np.clip(np.mean(scores), -1.0, 1.0))


def error_reduction(psnr_ref: float, psnr_method: float, ssim_ref: float,
                    ssim_method: float) -> Tuple[float, float]:
    """Relative RMSE and DSSIM reduction of ``method`` against ``ref``, in percent.

    RMSE is proportional to sqrt(10**(-PSNR/10)); DSSIM = (1 - SSIM) / 2.
    """
    rmse_ratio = math.sqrt(10.0 ** (-psnr_method / 10.0)) / math.sqrt(10.0 ** (-psnr_ref / 10.0))
    dssim_ref = (1.0 - ssim_ref) / 2.0
    dssim_method = (1.0 - ssim_method) / 2.0
    dssim_ratio = dssim_method / dssim_ref if dssim_ref > 0 else 1.0
    return 100.0 * (1.0 - rmse_ratio), 100.0 * (1.0 - dssim_ratio)


def mask_prf(pred, gt) -> Tuple[float, float, float]:
    p = np.asarray(pred) > 0
    g = np.asarray(gt) > 0
    if p.shape != g.shape:
        raise ShapeError(f"mask_prf: shape mismatch {p.shape} vs {g.shape}")
    tp = int(np.logical_and(p, g).sum())
    n_pred, n_gt = int(p.sum()), int(g.sum())
    if n_pred == 0:
        precision = 1.0 if n_gt == 0 else 0.0
    else:
        precision = tp / n_pred
    recall = tp / n_gt if n_gt else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def quality_report(restored, clean, pred_mask, gt_mask, y_channel: bool = False) -> QualityReport:
    """Full-image and per-region quality of one restored batch plus mask quality.

    Region PSNRs fall back to the full-image value when a region is empty.
    """
    x = as_tensor4(restored, "restored")
    n, _, h, w = x.shape
    gt = as_mask(gt_mask, (n, h, w))
    full = psnr(restored, clean, y_channel=y_channel)
    clean_region = 1.0 - gt
    psnr_clean = psnr(restored, clean, region=clean_region, y_channel=y_channel) \
        if clean_region.any() else full
    psnr_deg = psnr(restored, clean, region=gt, y_channel=y_channel) if gt.any() else full
    precision, recall, f1 = mask_prf(as_mask(pred_mask, (n, h, w)), gt)
    return QualityReport(
        psnr_db=full,
        ssim=ssim(restored, clean, y_channel=y_channel),
        psnr_clean_region_db=psnr_clean,
        psnr_degraded_region_db=psnr_deg,
        mask_precision=precision,
        mask_recall=recall,
        mask_f1=f1,
    )
