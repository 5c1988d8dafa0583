"""Command-line entry point: ``spair <command> [--config FILE] [--seed N] [--out DIR]``."""
import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from spair.autodiff.gradcheck import run_suite
from spair.core.config import settings
from spair.core.errors import ConfigError, SpairError
from spair.core.logging import get_logger
from spair.models.networks import build_net_r
from spair.repositories import config_file, images, manifest
from spair.schemas.run import RunConfig
from spair.services.datasets import build_splits
from spair.services.inference import restore
from spair.services.losses import gt_mask_from_pair
from spair.services.metrics import quality_report
from spair.services.persistence import load_net, save_net
from spair.workers.ablation import run_ablation
from spair.workers.bench import bench_sparse, speedup_warnings, write_csv
from spair.workers.evaluation import evaluate
from spair.workers.training import init_nets, run_seeds, train

logger = get_logger(__name__)


def _floats(text: str) -> List[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> List[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS,
                        help="key = value experiment config (keys listed below)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="overrides data.seed for synth, train.seed otherwise")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS,
                        help=f"output directory (default: SPAIR_OUTPUT_DIR or {settings.output_dir})")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="spair",
        description="Spatially-adaptive image restoration toolkit.",
        parents=[common],
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="config keys (with defaults):\n" + config_file.documented_keys(),
    )
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    sub.add_parser("synth", parents=[common], help="generate train/val/test datasets and manifests")
    p = sub.add_parser("train-loc", parents=[common], help="train Net_L")
    p.add_argument("--workers", type=int, default=0, help="threads for dataset generation")
    p = sub.add_parser("train-restore", parents=[common], help="train Net_R guided by a frozen Net_L")
    p.add_argument("--net-l", type=Path, help="Net_L checkpoint (overrides train.net_l_checkpoint)")
    p.add_argument("--workers", type=int, default=0, help="threads for dataset generation")

    p = sub.add_parser("infer", parents=[common], help="restore one PPM image")
    p.add_argument("input", type=Path, help="degraded image (P6)")
    p.add_argument("--net-r", type=Path, required=True)
    p.add_argument("--net-l", type=Path)
    p.add_argument("--gt", type=Path, help="clean image; writes quality.json when given")

    p = sub.add_parser("eval", parents=[common], help="score Net_R on the held-out test split")
    p.add_argument("--net-r", type=Path, required=True)
    p.add_argument("--net-l", type=Path)

    p = sub.add_parser("ablate", parents=[common], help="train and compare Net1-Net5")
    p.add_argument("--seeds", type=int, default=3, help="number of seeds, starting at train.seed")
    p.add_argument("--variants", help="comma-separated subset, e.g. Net1,Net5")

    p = sub.add_parser("gradcheck", parents=[common], help="verify analytic gradients numerically")
    p.add_argument("--instances", type=int, default=10)
    p.add_argument("--tolerance", type=float, default=1e-4)

    p = sub.add_parser("bench", parents=[common], help="sparse vs dense wall time and MAC counts")
    p.add_argument("--resolutions", type=_ints, default=[64, 128])
    p.add_argument("--widths", type=_ints, default=[8, 32])
    p.add_argument("--densities", type=_floats, default=[0.0, 0.1, 0.5, 1.0])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--threads", type=int, help="native thread cap while timing (default: SPAIR_BENCH_THREADS)")
    return parser


def _load_config(args) -> RunConfig:
    overrides: Dict[str, str] = {}
    if "seed" in args:
        key = "data.seed" if args.command == "synth" else "train.seed"
        overrides[key] = str(args.seed)
    return config_file.load(getattr(args, "config", None), overrides)


def _out_dir(args) -> Path:
    out = getattr(args, "out", None) or Path(settings.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args, config: RunConfig, out: Path) -> int:
    tau = config.train.mask_threshold
    splits = build_splits(config.data, tau)
    size = config.data.image_size
    for name, split in splits.items():
        manifest.write(out / f"{name}.manifest", split.manifest, size, size, tau)
        folder = out / name
        folder.mkdir(exist_ok=True)
        for entry, sample in zip(split.manifest, split.samples):
            images.write_ppm(folder / f"{entry.idx:05d}_clean.ppm", sample.clean)
            images.write_ppm(folder / f"{entry.idx:05d}_degraded.ppm", sample.degraded)
            images.write_pgm(folder / f"{entry.idx:05d}_mask.pgm", sample.gt_mask)
    logger.info("synth.complete", out=str(out), **{n: len(s.samples) for n, s in splits.items()})
    return 0


def cmd_train_loc(args, config: RunConfig, out: Path) -> int:
    splits = build_splits(config.data, config.train.mask_threshold, args.workers, only=("train", "val"))
    train_config = config.train.model_copy(update={"phase": "localize"})
    net_l = init_nets(config.net_spec(), train_config.seed, "localize")
    result = train(train_config, splits["train"].samples, splits["val"].samples, net_l,
                   log_path=out / "net_l.log")
    save_net(out / "net_l.sptn", result.net, result.adam)
    return 0


def _net_l_path(args, config: RunConfig) -> Path:
    path = getattr(args, "net_l", None) or config.train.net_l_checkpoint
    if path is None:
        raise ConfigError("restore needs a trained Net_L: pass --net-l or set train.net_l_checkpoint")
    return Path(path)


def cmd_train_restore(args, config: RunConfig, out: Path) -> int:
    net_l, _ = load_net(_net_l_path(args, config), expect="localizer")
    splits = build_splits(config.data, config.train.mask_threshold, args.workers, only=("train", "val"))
    train_config = config.train.model_copy(update={"phase": "restore"})
    init_seed, _ = run_seeds(train_config.seed)
    net_r = build_net_r(config.net_spec(), init_seed, loc_channels=net_l.feature_channels())
    result = train(train_config, splits["train"].samples, splits["val"].samples, net_r, net_l=net_l,
                   log_path=out / "net_r.log")
    save_net(out / "net_r.sptn", result.net, result.adam)
    return 0


def _restorer(args, config: RunConfig):
    net_r, _ = load_net(args.net_r, expect="restorer")
    net_l = None
    if net_r.uses_mask:
        net_l, _ = load_net(_net_l_path(args, config), expect="localizer")
    return net_r, net_l


def cmd_infer(args, config: RunConfig, out: Path) -> int:
    net_r, net_l = _restorer(args, config)
    degraded = images.read_image(args.input)
    if degraded.ndim != 4:
        raise ConfigError(f"{args.input} is not an RGB (P6) image")
    restored, guide = restore(net_r, net_l, degraded, threshold=config.eval.prob_threshold)
    images.write_ppm(out / "restored.ppm", restored)
    images.write_pgm(out / "mask.pgm", guide.mask)
    if args.gt is not None:
        clean = images.read_image(args.gt)
        gt_mask = gt_mask_from_pair(clean, degraded, config.train.mask_threshold)
        report = quality_report(restored, clean, guide.mask, gt_mask, y_channel=config.eval.y_channel)
        (out / "quality.json").write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("infer.complete", out=str(out), masked_fraction=float(guide.mask.mean()))
    return 0


def cmd_eval(args, config: RunConfig, out: Path) -> int:
    net_r, net_l = _restorer(args, config)
    test = build_splits(config.data, config.train.mask_threshold, only=("test",))["test"]
    result = evaluate(net_r, net_l, test.samples, config.eval, config.train.mask_source,
                      report_path=out / "eval.report")
    (out / "quality.json").write_text(result.summary().model_dump_json(indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_ablate(args, config: RunConfig, out: Path) -> int:
    splits = build_splits(config.data, config.train.mask_threshold)
    seeds = [config.train.seed + i for i in range(args.seeds)]
    labels = [v.strip() for v in args.variants.split(",") if v.strip()] if args.variants else None
    result = run_ablation(config, seeds, splits["train"].samples, splits["val"].samples,
                          splits["test"].samples, out_dir=out, labels=labels)
    table = result.table()
    (out / "ablation.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


def cmd_gradcheck(args, config: RunConfig, out: Path) -> int:
    reports = run_suite(instances=args.instances, seed=config.train.seed, tolerance=args.tolerance)
    lines = [
        f"op={r.op} max_rel_err={r.max_rel_error:.3e} checked={r.checked} "
        f"instances={r.instances} ok={str(r.passed).lower()}"
        for r in reports
    ]
    (out / "gradcheck.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0 if all(r.passed for r in reports) else 1


def cmd_bench(args, config: RunConfig, out: Path) -> int:
    run = bench_sparse(args.resolutions, args.widths, args.densities, repeats=args.repeats,
                       warmup=args.warmup, seed=config.train.seed, threads=args.threads)
    sys.stdout.write(write_csv(run, out / "bench.csv"))
    for note in speedup_warnings(run.rows):
        logger.warning("bench.slow_sparse", detail=note)
    return 0


HANDLERS = {
    "synth": cmd_synth,
    "train-loc": cmd_train_loc,
    "train-restore": cmd_train_restore,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
    "bench": cmd_bench,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = _load_config(args)
        return HANDLERS[args.command](args, config, _out_dir(args))
    except (SpairError, OSError) as exc:
        logger.error("cli.failed", command=args.command, error_type=type(exc).__name__, error=str(exc))
        print(f"spair {args.command}: {exc}", file=sys.stderr)
        return 1
