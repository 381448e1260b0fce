"""Command-line entry point: ``fcacc {fit,evaluate,ablate,reproduce}``."""

from __future__ import annotations

import argparse
import logging
import statistics
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataio import DataError, load_ucr_dataset, znormalize
from .evaluation import (append_metrics_row, evaluate, export_embeddings, hard_assign,
                         plot_history)
from .fuzzy import export_aware_sets, export_memberships
from .trainer import VARIANTS, TrainConfig, Trainer

log = logging.getLogger("fcacc")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4

REPRODUCE_DATASETS = ("SyntheticControl", "ShapeletSim")
REPRODUCE_SEEDS = (0, 1, 2)

# flag -> TrainConfig field
OVERRIDES = {
    "alpha": "alpha", "r": "r", "theta": "theta",
    "lambda1_max": "lambda1_max", "lambda2_max": "lambda2_max",
    "sigma": "sigma_perturb", "epochs_pretrain": "epochs_pretrain",
    "epochs_joint": "epochs_joint", "batch_size": "batch_size", "lr": "learning_rate",
    "seed": "seed", "variant": "variant",
}


@dataclass
class RunSpec:
    command: str
    datasets: list
    data_root: Path
    out: Path
    config: TrainConfig
    seeds: list = field(default_factory=list)
    split: str = "merged"
    checkpoint: Path | None = None
    variants: list = field(default_factory=list)


def _seed_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fcacc",
                                     description="Fuzzy cluster-aware contrastive clustering of time series.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dataset", action="append", help="dataset name (repeatable)")
    common.add_argument("--data-root", type=Path, default=Path("data"))
    common.add_argument("--out", type=Path, default=Path("runs"))
    common.add_argument("--split", choices=("merged", "test"), default="merged")
    common.add_argument("--config", type=Path, help="flat key=value file; flags take precedence")
    common.add_argument("--alpha", type=float)
    common.add_argument("--r", type=float)
    common.add_argument("--theta", type=float)
    common.add_argument("--lambda1-max", type=float)
    common.add_argument("--lambda2-max", type=float)
    common.add_argument("--sigma", type=float)
    common.add_argument("--epochs-pretrain", type=int)
    common.add_argument("--epochs-joint", type=int)
    common.add_argument("--batch-size", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--variant", choices=VARIANTS)
    common.add_argument("--seeds", type=_seed_list, help="comma-separated seeds")
    common.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fit", parents=[common], help="train on a dataset and report NMI/RI")
    ev = sub.add_parser("evaluate", parents=[common], help="cluster with a saved checkpoint")
    ev.add_argument("--checkpoint", type=Path)
    ab = sub.add_parser("ablate", parents=[common], help="variant sweep over seeds")
    ab.add_argument("--variants", type=lambda s: s.split(","), default=list(VARIANTS))
    sub.add_parser("reproduce", parents=[common], help="stand-in dataset suite with fixed seeds")
    return parser


def parse_args(argv) -> RunSpec:
    parser = build_parser()
    args = parser.parse_args(argv)
    base = {}
    if args.config is not None:
        try:
            base = TrainConfig.coerce(_read_config(args.config))
        except (OSError, KeyError, ValueError) as exc:
            parser.error(f"bad config file {args.config}: {exc}")
    for flag, key in OVERRIDES.items():
        value = getattr(args, flag)
        if value is not None:
            base[key] = value
    try:
        cfg = TrainConfig(**base).validate()
    except ValueError as exc:
        parser.error(str(exc))
    if args.command == "ablate":
        bad = [v for v in args.variants if v not in VARIANTS]
        if bad:
            parser.error(f"unknown variant(s) {bad}; choose from {list(VARIANTS)}")

    datasets = args.dataset or []
    if args.command == "reproduce" and not datasets:
        datasets = list(REPRODUCE_DATASETS)
    if not datasets:
        parser.error("at least one --dataset is required")
    if args.seeds:
        seeds = args.seeds
    elif args.command == "reproduce":
        seeds = list(REPRODUCE_SEEDS)
    else:
        seeds = [cfg.seed]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                         format="%(asctime)s %(name)s %(message)s")
    return RunSpec(args.command, datasets, args.data_root, args.out, cfg, seeds, args.split,
                   getattr(args, "checkpoint", None), getattr(args, "variants", []))


def _read_config(path: Path) -> dict:
    values = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


# -- commands ---------------------------------------------------------------

def _load(spec: RunSpec, name: str):
    return znormalize(load_ucr_dataset(spec.data_root, name, spec.split))


def _run_dir(spec: RunSpec, name: str, seed: int, variant: str = "full") -> Path:
    sub = f"seed{seed}" if variant == "full" else f"{variant}_seed{seed}"
    return spec.out / name / sub


def _summary(name, seed, report, extra=""):
    print(f"dataset={name} seed={seed} nmi={report.nmi:.4f} ri={report.ri:.4f}{extra}", flush=True)


def fit_one(spec: RunSpec, data, seed: int, variant: str = "full"):
    cfg = replace(spec.config, seed=seed, variant=variant)
    out = _run_dir(spec, data.name, seed, variant)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    start = time.perf_counter()

    def progress(tr, rec):
        log.info("%s seed=%d epoch=%d stage=%s loss=%.4f nmi=%.4f aware=%d", data.name, seed,
                 rec.epoch, rec.stage, rec.total_loss, rec.nmi, rec.aware_count)

    trainer = Trainer(data, cfg)
    trainer.fit(progress)
    runtime = time.perf_counter() - start
    trainer.save_checkpoint(out / f"ckpt_epoch{trainer.epoch}")
    trainer.history.to_csv(out / "history.csv")
    plot_history(trainer.history, out)
    preds = hard_assign(trainer.membership.p)
    report = evaluate(data.labels, preds)
    export_memberships(trainer.membership.p, out / "memberships.csv")
    export_aware_sets(trainer.aware, out / "aware_sets.csv")
    export_embeddings(trainer.representations(), data.labels, preds, out / "embeddings.csv")
    append_metrics_row(out / "metrics.csv", data.name, seed, report, runtime)
    return report, runtime


def cmd_fit(spec: RunSpec) -> int:
    for name in spec.datasets:
        data = _load(spec, name)
        for seed in spec.seeds:
            report, runtime = fit_one(spec, data, seed, spec.config.variant)
            append_metrics_row(spec.out / "metrics.csv", name, seed, report, runtime)
            _summary(name, seed, report)
    return EXIT_OK


def _latest_checkpoint(run_dir: Path) -> Path | None:
    found = sorted(run_dir.glob("ckpt_epoch*"), key=lambda p: int(p.name[len("ckpt_epoch"):]))
    return found[-1] if found else None


def cmd_evaluate(spec: RunSpec) -> int:
    for name in spec.datasets:
        data = _load(spec, name)
        for seed in spec.seeds:
            ckpt = spec.checkpoint or _latest_checkpoint(_run_dir(spec, name, seed))
            if ckpt is None or not Path(ckpt).exists():
                print(f"error: no checkpoint for {name} seed {seed} under {spec.out}", file=sys.stderr)
                return EXIT_DATA
            start = time.perf_counter()
            trainer = Trainer.from_checkpoint(ckpt, data)
            membership, _ = trainer.fit_clusters()
            report = evaluate(data.labels, hard_assign(membership.p))
            append_metrics_row(Path(ckpt).parent / "eval_metrics.csv", name, seed, report,
                               time.perf_counter() - start)
            _summary(name, seed, report)
    return EXIT_OK


def cmd_ablate(spec: RunSpec) -> int:
    rows = []
    for name in spec.datasets:
        data = _load(spec, name)
        for variant in spec.variants:
            for seed in spec.seeds:
                report, runtime = fit_one(spec, data, seed, variant)
                rows.append((name, variant, seed, report.nmi, report.ri, runtime))
                _summary(name, seed, report, f" variant={variant}")
    path = spec.out / "ablation.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write("dataset,variant,seed,nmi,ri,runtime_s\n")
        for row in rows:
            fh.write("{},{},{},{:.6f},{:.6f},{:.3f}\n".format(*row))
    print(f"{'dataset':<20}{'variant':<24}{'mean_nmi':>10}{'mean_ri':>10}")
    for name in spec.datasets:
        for variant in spec.variants:
            sel = [r for r in rows if r[0] == name and r[1] == variant]
            print(f"{name:<20}{variant:<24}{np.mean([r[3] for r in sel]):>10.4f}"
                  f"{np.mean([r[4] for r in sel]):>10.4f}")
    return EXIT_OK


def cmd_reproduce(spec: RunSpec) -> int:
    metrics = spec.out / "metrics.csv"
    results = {}
    for name in spec.datasets:
        data = _load(spec, name)
        for seed in spec.seeds:
            report, runtime = fit_one(spec, data, seed)
            append_metrics_row(metrics, name, seed, report, runtime)
            results.setdefault(name, []).append(report)
            _summary(name, seed, report)
    print(f"{'dataset':<20}{'median_nmi':>12}{'median_ri':>12}")
    for name, reports in results.items():
        print(f"{name:<20}{statistics.median(r.nmi for r in reports):>12.4f}"
              f"{statistics.median(r.ri for r in reports):>12.4f}")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "evaluate": cmd_evaluate, "ablate": cmd_ablate,
            "reproduce": cmd_reproduce}


def run(spec: RunSpec) -> int:
    try:
        return COMMANDS[spec.command](spec)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        build_parser().print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        spec = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
