"""Two-phase training: Net_L on BCE first, then Net_R on L1 guided by the frozen Net_L."""
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from spair.autodiff.tape import backward
from spair.core.config import settings
from spair.core.errors import ConfigError, NonFiniteError
from spair.core.logging import get_logger
from spair.core.rng import Rng
from spair.models.networks import (
    LocalizationNet,
    RestorationNet,
    binarize,
    build_net_l,
    build_net_r,
    forward_localize,
)
from spair.repositories.metric_log import MetricLog
from spair.schemas.net import NetSpec
from spair.schemas.run import TrainConfig
from spair.services import metrics
from spair.services.batches import BatchLoader
from spair.services.inference import guidance, restore
from spair.services.losses import loss_bce, loss_l1
from spair.services.optim import AdamState, adam_update, lr_at
from spair.services.synthdata import Sample

logger = get_logger(__name__)

MAX_REJECTED_STEPS = 10

Net = Union[LocalizationNet, RestorationNet]


@dataclass
class TrainResult:
    net: Net
    adam: AdamState
    log: MetricLog
    losses: List[float] = field(default_factory=list)
    rejected_steps: int = 0


def run_seeds(seed: int) -> Tuple[int, int]:
    """(parameter-init seed, batch-stream seed) derived from the run seed."""
    rng = Rng(seed)
    return rng.split(), rng.split()


def init_nets(spec: NetSpec, seed: int, phase: str, dtype=np.float32) -> Net:
    init_seed, _ = run_seeds(seed)
    if phase == "localize":
        return build_net_l(spec, init_seed, dtype)
    return build_net_r(spec, init_seed, dtype)


def validate_localizer(net_l: LocalizationNet, samples: Sequence[Sample], threshold: float = 0.5) -> float:
    """Mean mask F1 over the validation samples."""
    scores = []
    for sample in samples:
        prob, _ = forward_localize(net_l, sample.degraded)
        scores.append(metrics.mask_prf(binarize(prob, threshold), sample.gt_mask)[2])
    return float(np.mean(scores))


def validate_restorer(net_r: RestorationNet, net_l: Optional[LocalizationNet], samples: Sequence[Sample],
                      mask_source: str = "predicted", threshold: float = 0.5) -> float:
    """Mean full-image PSNR over the validation samples."""
    scores = []
    for sample in samples:
        restored, _ = restore(net_r, net_l, sample.degraded, mask_source, sample.gt_mask, threshold)
        scores.append(metrics.psnr(restored, sample.clean))
    return float(np.mean(scores))


def train(config: TrainConfig, train_samples: Sequence[Sample], val_samples: Sequence[Sample],
          net: Net, net_l: Optional[LocalizationNet] = None, log_path: Optional[Path] = None,
          adam: Optional[AdamState] = None, prefetch_depth: Optional[int] = None) -> TrainResult:
    """Optimize ``net`` for ``config.iterations`` steps; fully determined by ``config.seed``.

    In the restore phase Net_L runs forward only: its features and mask are detached, so
    no gradient reaches it and its parameters never change.

    Passing a saved ``adam`` state resumes at iteration ``adam.step`` and skips the batches
    that iterations before it consumed, so the continuation matches an uninterrupted run
    as long as no step was rejected.
    """
    restoring = config.phase == "restore"
    if restoring and not isinstance(net, RestorationNet):
        raise ConfigError("restore phase trains a restoration network")
    if not restoring and not isinstance(net, LocalizationNet):
        raise ConfigError("localize phase trains a localization network")
    if restoring and net.uses_mask and net_l is None:
        raise ConfigError("restore phase needs a trained Net_L checkpoint (train.net_l_checkpoint)")

    _, stream_seed = run_seeds(config.seed)
    loader = BatchLoader(
        train_samples, config.batch_size, config.patch_size, stream_seed,
        hflip=config.hflip, vflip=config.vflip,
        prefetch_depth=settings.prefetch_depth if prefetch_depth is None else prefetch_depth,
    )
    adam = adam or AdamState()
    log = MetricLog(log_path)
    result = TrainResult(net=net, adam=adam, log=log)
    params = net.params
    values = {path: var.value for path, var in params.items()}
    consecutive_rejections = 0
    start = adam.step
    # a resumed run picks up the batch stream where the saved run stopped
    loader.skip(start)

    variant = net.spec.variant if restoring else "Net_L"
    with structlog.contextvars.bound_contextvars(phase=config.phase, variant=variant, seed=config.seed):
        logger.info("train.started", iterations=config.iterations, params=net.parameter_count(),
                    start_iteration=start)
        for offset, batch in enumerate(loader.stream(config.iterations - start)):
            iteration = start + offset
            lr = lr_at(iteration, config)
            if restoring:
                guide = guidance(net_l, batch.degraded, config.mask_source, batch.mask)
                out = net.forward(
                    batch.degraded,
                    guide.mask if net.uses_mask else None,
                    guide.features if net.spec.has_sfm else None,
                )
                loss = loss_l1(out, batch.clean)
            else:
                prob, _ = net.forward(batch.degraded)
                loss = loss_bce(prob, batch.mask)

            grads = backward(loss, params)
            try:
                adam_update(values, grads, adam, lr)
                consecutive_rejections = 0
            except NonFiniteError as exc:
                result.rejected_steps += 1
                consecutive_rejections += 1
                logger.warning("train.step_rejected", iteration=iteration + 1, error=str(exc))
                if consecutive_rejections >= MAX_REJECTED_STEPS:
                    raise
            loss_value = float(loss.value)
            result.losses.append(loss_value)

            done = iteration + 1
            validate = done % config.val_interval == 0 or done == config.iterations
            if done % config.log_interval == 0 or validate:
                record = {"iter": done, "loss": loss_value, "lr": lr}
                if validate and val_samples:
                    if restoring:
                        record["val_psnr"] = validate_restorer(net, net_l, val_samples, config.mask_source)
                    else:
                        record["val_f1"] = validate_localizer(net, val_samples)
                log.append(**record)
                logger.info("train.step", **record)
        logger.info("train.complete", final_loss=result.losses[-1] if result.losses else None,
                    rejected_steps=result.rejected_steps)
    return result
