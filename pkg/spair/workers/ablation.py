"""Net1-Net5 ablation ladder under one parameter budget, repeated over seeds."""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from spair.core.errors import ConfigError
from spair.core.logging import get_logger
from spair.models.networks import ablation_variant, build_net_l, build_net_r
from spair.schemas.net import VARIANTS, NetSpec
from spair.schemas.reports import AblationRow
from spair.schemas.run import RunConfig
from spair.services.metrics import error_reduction
from spair.services.synthdata import Sample
from spair.workers.evaluation import evaluate
from spair.workers.training import run_seeds, train

logger = get_logger(__name__)

REFERENCE = "Net1"
# (label, variant, SNL step-2 policy)
LADDER: Tuple[Tuple[str, str, Optional[str]], ...] = tuple(
    (v, v, None) for v in VARIANTS
) + (("Net5-all", "Net5", "all_pixels"),)


@dataclass
class AblationResult:
    runs: pd.DataFrame  # one row per (label, seed)
    rows: List[AblationRow]

    def table(self) -> str:
        frame = pd.DataFrame([r.model_dump() for r in self.rows])
        return frame.to_string(index=False, float_format=lambda v: f"{v:.4f}")


def ladder_specs(base: NetSpec, labels: Optional[Sequence[str]] = None) -> Dict[str, NetSpec]:
    known = [label for label, _, _ in LADDER]
    unknown = [label for label in labels or () if label not in known]
    if unknown:
        raise ConfigError(f"unknown ablation variant(s) {', '.join(unknown)}; choose from {', '.join(known)}")
    specs = {}
    for label, variant, policy in LADDER:
        if labels is not None and label not in labels:
            continue
        spec = ablation_variant(base, variant)
        if policy is not None:
            spec = spec.model_copy(update={"snl_policy": policy})
        specs[label] = spec
    if not specs:
        raise ConfigError("no ablation variants selected")
    return specs


def summarize(runs: pd.DataFrame) -> List[AblationRow]:
    """Median over seeds per label, with error reduction relative to Net1."""
    medians = runs.groupby("label", sort=False).agg(
        params=("params", "first"),
        psnr=("psnr", "median"),
        ssim=("ssim", "median"),
        clean_mse=("clean_mse", "median"),
        seeds=("seed", "nunique"),
    )
    ref = medians.loc[REFERENCE] if REFERENCE in medians.index else None
    rows = []
    for label, row in medians.iterrows():
        rmse_red, dssim_red = (0.0, 0.0) if ref is None else error_reduction(
            ref["psnr"], row["psnr"], ref["ssim"], row["ssim"]
        )
        rows.append(AblationRow(
            variant=label, params=int(row["params"]), psnr_db=float(row["psnr"]),
            ssim=float(row["ssim"]), clean_mse=float(row["clean_mse"]),
            rmse_reduction_pct=rmse_red, dssim_reduction_pct=dssim_red, seeds=int(row["seeds"]),
        ))
    return rows


def run_ablation(config: RunConfig, seeds: Sequence[int], train_samples: Sequence[Sample],
                 val_samples: Sequence[Sample], test_samples: Sequence[Sample],
                 out_dir: Optional[Path] = None, labels: Optional[Sequence[str]] = None) -> AblationResult:
    """Per seed: train one Net_L, then every rung of the ladder guided by it."""
    base = config.net_spec()
    specs = ladder_specs(base, labels)
    if not seeds:
        raise ConfigError("ablation needs at least one seed")
    records = []
    for seed in seeds:
        loc_config = config.train.model_copy(update={"phase": "localize", "seed": seed})
        init_seed, _ = run_seeds(seed)
        net_l = build_net_l(base, init_seed)
        train(loc_config, train_samples, val_samples, net_l,
              log_path=out_dir / f"seed{seed}" / "net_l.log" if out_dir else None)
        for label, spec in specs.items():
            restore_config = config.train.model_copy(update={
                "phase": "restore", "seed": seed, "variant": spec.variant, "snl_policy": spec.snl_policy,
            })
            net_r = build_net_r(spec, init_seed, loc_channels=net_l.feature_channels())
            train(restore_config, train_samples, val_samples, net_r, net_l=net_l,
                  log_path=out_dir / f"seed{seed}" / f"{label}.log" if out_dir else None)
            result = evaluate(net_r, net_l, test_samples, config.eval, config.train.mask_source,
                              report_path=out_dir / f"seed{seed}" / f"{label}.report" if out_dir else None)
            frame = result.frame
            records.append({
                "label": label, "seed": seed, "params": net_r.parameter_count(),
                "psnr": float(frame["psnr"].mean()), "ssim": float(frame["ssim"].mean()),
                "clean_mse": float(frame["clean_mse"].mean()),
            })
            logger.info("ablate.variant_done", label=label, seed=seed, psnr=records[-1]["psnr"])
    runs = pd.DataFrame(records)
    result = AblationResult(runs=runs, rows=summarize(runs))
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        runs.to_csv(out_dir / "ablation_runs.csv", index=False)
        pd.DataFrame([r.model_dump() for r in result.rows]).to_csv(out_dir / "ablation.csv", index=False)
    return result
