"""Finite-difference verification of the reverse-mode rules."""
from typing import Callable, Dict, List, Sequence

import numpy as np

from spair.autodiff import functional as F
from spair.autodiff.tape import Variable, backward, parameter
from spair.core.logging import get_logger
from spair.core.rng import Rng
from spair.ops import guided
from spair.schemas.reports import GradReport

logger = get_logger(__name__)

DEFAULT_STEP = 1e-4
REL_FLOOR = 1e-8


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return np.abs(analytic - numeric) / denom


def gradcheck(
    op: Callable[..., Variable],
    inputs: Sequence[np.ndarray],
    step: float = DEFAULT_STEP,
    seed: int = 0,
    name: str = "op",
    tolerance: float = 1e-4,
) -> GradReport:
    """Compare reverse-mode gradients of ``sum(R * op(*inputs))`` against central differences.

    ``R`` is a fixed random projection; each evaluation uses h = step * max(1, |x|).
    """
    points = [np.array(x, dtype=np.float64, copy=True) for x in inputs]
    variables = [parameter(x) for x in points]
    out = op(*variables)
    if not np.all(np.isfinite(out.value)):
        return GradReport(op=name, max_rel_error=float("inf"), max_abs_error=float("inf"),
                          checked=0, non_finite=True, tolerance=tolerance)
    projection = Rng(seed).uniform_array(out.shape, -1.0, 1.0)

    loss = F.sum(F.mul(out, projection))
    backward(loss)
    analytic = [v.grad for v in variables]

    def objective() -> float:
        value = op(*[Variable(x) for x in points]).value
        if not np.all(np.isfinite(value)):
            raise FloatingPointError
        return float(np.sum(value * projection))

    max_rel, max_abs, checked = 0.0, 0.0, 0
    try:
        for x, grad in zip(points, analytic):
            flat, flat_grad = x.reshape(-1), grad.reshape(-1)
            for idx in range(flat.size):
                original = flat[idx]
                h = step * max(1.0, abs(original))
                flat[idx] = original + h
                f_plus = objective()
                flat[idx] = original - h
                f_minus = objective()
                flat[idx] = original
                numeric = (f_plus - f_minus) / (2.0 * h)
                abs_err = abs(flat_grad[idx] - numeric)
                rel_err = float(relative_error(np.array(flat_grad[idx]), np.array(numeric)))
                max_abs, max_rel = max(max_abs, abs_err), max(max_rel, rel_err)
                checked += 1
    except FloatingPointError:
        return GradReport(op=name, max_rel_error=float("inf"), max_abs_error=float("inf"),
                          checked=checked, non_finite=True, tolerance=tolerance)

    return GradReport(op=name, max_rel_error=max_rel, max_abs_error=float(max_abs),
                      checked=checked, tolerance=tolerance)


def _random_mask(rng: Rng, shape, density: float) -> np.ndarray:
    """Binary mask with both regions guaranteed non-empty."""
    mask = (rng.random_array(shape) < density).astype(np.float64)
    flat = mask.reshape(mask.shape[0], -1)
    flat[:, 0], flat[:, -1] = 1.0, 0.0
    return mask


def _cases(rng: Rng) -> Dict[str, tuple]:
    """One random instance of every differentiable op: (callable, inputs)."""
    x = rng.uniform_array((1, 2, 5, 5), -1, 1)
    w3 = rng.uniform_array((3, 2, 3, 3), -1, 1)
    feat = rng.uniform_array((1, 4, 8, 8), -1, 1)
    loc = rng.uniform_array((1, 4, 8, 8), -1, 1)
    mask40 = _random_mask(rng, (1, 8, 8), 0.4)
    mask30 = _random_mask(rng, (1, 8, 8), 0.3)
    small = rng.uniform_array((1, 3, 6, 6), -0.5, 0.5)
    mask_small = _random_mask(rng, (1, 6, 6), 0.5)
    w_sparse = rng.uniform_array((2, 3, 3, 3), -1, 1)
    b_sparse = rng.uniform_array((2,), -1, 1)
    w_point = rng.uniform_array((4, 4), -1, 1)
    b_point = rng.uniform_array((4,), -1, 1)
    snl_feat = rng.uniform_array((1, 3, 6, 6), -0.5, 0.5)
    w_fuse = rng.uniform_array((4, 3, 3, 3), -0.5, 0.5)
    b_fuse = rng.uniform_array((4,), -0.5, 0.5)
    mask_snl = _random_mask(rng, (1, 6, 6), 0.3)
    pred = rng.uniform_array((1, 3, 4, 4), 0, 1)
    # keep |pred - target| away from the kink of |.|
    sign = np.where(rng.random_array(pred.shape) < 0.5, -1.0, 1.0)
    target = pred + sign * rng.uniform_array(pred.shape, 0.05, 0.5)
    prob = rng.uniform_array((1, 1, 4, 4), 0.05, 0.95)
    gt = (rng.random_array((1, 4, 4)) < 0.5).astype(np.float64)

    def masked_stats_op(v):
        mean, std = guided.masked_stats(v, mask40)
        return F.concat([mean, std], axis=1)

    return {
        "conv2d_dense": (lambda v, k: F.conv2d(v, k, stride=1, padding=1), [x, w3]),
        "softmax": (lambda v: F.softmax(v), [rng.uniform_array((8,), -2, 2)]),
        "masked_stats": (masked_stats_op, [feat]),
        "sfm": (lambda a, b: guided.sfm_modulate(a, b, mask40), [feat, loc]),
        "sparse_conv": (lambda v, k, b: guided.sparse_conv(v, mask_small, (k, b)),
                        [small, w_sparse, b_sparse]),
        "sparse_pointwise": (lambda v, k, b: guided.sparse_pointwise(v, mask30, k, b),
                             [feat, w_point, b_point]),
        "snl_step": (lambda v, k, b: guided.snl_step(v, mask_snl, "clean_only", (k, b)),
                     [snl_feat, w_fuse, b_fuse]),
        "l1": (lambda p: F.l1_loss(p, target), [pred]),
        "bce": (lambda p: F.bce_loss(p, gt), [prob]),
    }


SUITE_OPS = ("conv2d_dense", "softmax", "masked_stats", "sfm", "sparse_conv",
             "sparse_pointwise", "snl_step", "l1", "bce")


def run_suite(instances: int = 10, seed: int = 0, tolerance: float = 1e-4) -> List[GradReport]:
    """Gradcheck every differentiable op over ``instances`` random f64 instances."""
    rng = Rng(seed)
    worst: Dict[str, GradReport] = {}
    for instance in range(instances):
        for name, (op, inputs) in _cases(Rng(rng.split())).items():
            report = gradcheck(op, inputs, seed=rng.split(), name=name, tolerance=tolerance)
            previous = worst.get(name)
            if previous is None or report.non_finite or report.max_rel_error > previous.max_rel_error:
                worst[name] = report
            logger.debug("gradcheck.instance", op=name, instance=instance,
                         max_rel_error=report.max_rel_error)
    reports = []
    for name in SUITE_OPS:
        report = worst[name].model_copy(update={"instances": instances})
        if not report.passed:
            logger.warning("gradcheck.op_failed", op=name, max_rel_error=report.max_rel_error)
        reports.append(report)
    return reports
