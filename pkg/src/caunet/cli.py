"""Command-line entry point: train, eval, augment, stats, bench, synth."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from caunet import checkpoint, stats
from caunet.augment import AugPipelineSpec, apply_pipeline_traced, profile
from caunet.bench import benchmark_inference
from caunet.data import LabelMapping, load_sample, scan, synth_generate, write_corpus, write_sample
from caunet.data.cityscapes import Sample
from caunet.data.synth import corrupt
from caunet.errors import CAUNetError, ConfigurationError
from caunet.metrics import evaluate, pr_curve, roc_curve, subsample_pixels
from caunet.network import NetworkConfig, build
from caunet.train import TrainConfig, predict, train

CURVE_PIXEL_LIMIT = 200_000


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from exc
    return w, h


def _common(sub=False) -> argparse.ArgumentParser:
    # subcommand copies default to SUPPRESS so they only override when given
    d = argparse.SUPPRESS if sub else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=d, help="master seed")
    p.add_argument("--config", type=Path, default=d, help="JSON config file")
    p.add_argument("--out", type=Path, default=d, help="output directory")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="caunet", description=__doc__, parents=[_common()])
    subs = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = [_common(sub=True)]

    def data_args(p):
        p.add_argument("--data", type=Path, help="dataset root in the Cityscapes layout")
        p.add_argument("--drivable-ids", type=int, nargs="+", default=[7])
        p.add_argument("--synth-train", type=int, default=8, help="synthetic train samples when --data is absent")
        p.add_argument("--synth-val", type=int, default=4)
        p.add_argument("--corrupt-val", action="store_true", help="apply the validation distribution shift")

    p = subs.add_parser("train", parents=common, help="train a network; writes runlog.csv and checkpoints")
    data_args(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--profile", choices=["none", "light", "heavy"])

    p = subs.add_parser("eval", parents=common, help="metrics, ROC and PR curves for a checkpoint")
    data_args(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", default="val", choices=["train", "val", "test"])
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--size", type=_size, help="resize frames to WIDTHxHEIGHT")

    p = subs.add_parser("augment", parents=common, help="augment a dataset with a pipeline spec")
    p.add_argument("--input", type=Path, required=True, help="dataset root in the Cityscapes layout")
    p.add_argument("--spec", type=Path, help="pipeline spec JSON")
    p.add_argument("--profile", choices=["none", "light", "heavy"], default="heavy")
    p.add_argument("--epoch", type=int, default=0)

    p = subs.add_parser("stats", parents=common, help="split statistics for a dataset")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--drivable-ids", type=int, nargs="+", default=[7])
    p.add_argument("--pairs", type=int, default=500)
    p.add_argument("--size", type=_size, default=(256, 128), help="common mask size for Jaccard pairs")
    p.add_argument("--splits", nargs=2, default=["train", "val"])

    p = subs.add_parser("bench", parents=common, help="inference latency at batch size 1")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--resolution", type=_size, default=(1024, 512))
    p.add_argument("--runs", type=int, default=20)

    p = subs.add_parser("synth", parents=common, help="write a synthetic corpus in the Cityscapes layout")
    p.add_argument("--size", type=_size, default=(64, 64))
    p.add_argument("--n-train", type=int, default=8)
    p.add_argument("--n-val", type=int, default=4)
    p.add_argument("--n-test", type=int, default=0)
    p.add_argument("--corrupt-val", action="store_true")
    return parser


# -- helpers ---------------------------------------------------------------------------
def _out(args, default: str) -> Path:
    out = args.out or Path("runs") / default
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args, fallback: int = 0) -> int:
    return fallback if args.seed is None else args.seed


def _train_config(args) -> TrainConfig:
    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    d = cfg.to_dict()
    if args.seed is not None:
        d["seed"] = args.seed
    if getattr(args, "epochs", None):
        d["epochs"] = args.epochs
        d["lr_switch_epoch"] = min(d["lr_switch_epoch"], args.epochs)
    if getattr(args, "profile", None):
        d["profile"] = args.profile
    return TrainConfig.from_dict(d)


def _load_split(root: Path, split: str, mapping: LabelMapping, size) -> list[Sample]:
    entries = scan(root).split(split)
    if not entries:
        raise ConfigurationError(f"no {split} entries under {root}")
    return [load_sample(e, mapping, size) for e in entries]


def _synth_splits(args, size, seed) -> tuple[list[Sample], list[Sample]]:
    tr = synth_generate(args.synth_train, size, seed)
    va = synth_generate(args.synth_val, size, seed, start=args.synth_train)
    if args.corrupt_val:
        va = [s.replace(corrupt(s.image, seed, args.synth_train + i)) for i, s in enumerate(va)]
    return tr, va


# -- commands --------------------------------------------------------------------------
def cmd_train(args) -> dict:
    cfg = _train_config(args)
    if args.data:
        mapping = LabelMapping(set(args.drivable_ids))
        tr = _load_split(args.data, "train", mapping, cfg.resolution)
        va = _load_split(args.data, "val", mapping, cfg.resolution)
    else:
        tr, va = _synth_splits(args, cfg.resolution, cfg.seed)
    out = _out(args, "train")
    _, log = train(cfg, tr, va, out_dir=out)
    return {"out": str(out), "epochs": len(log.rows), "best_epoch": log.best_epoch, "best_val_iou": log.best_val_iou,
            "final": log.last()}


def cmd_eval(args) -> dict:
    net, header = checkpoint.load(args.checkpoint)
    if args.data:
        samples = _load_split(args.data, args.split, LabelMapping(set(args.drivable_ids)), args.size)
    else:
        cfg = _train_config(args)
        tr, va = _synth_splits(args, args.size or cfg.resolution, cfg.seed)
        samples = tr if args.split == "train" else va
    prob = predict(net, samples)
    truth = np.stack([s.mask for s in samples])[:, None]
    out = _out(args, "eval")
    report = evaluate(prob, truth, args.threshold)
    report.to_json(out / "metrics.json")
    s, t = subsample_pixels(prob, truth, CURVE_PIXEL_LIMIT, np.random.default_rng(_seed(args)))
    result = {"metrics": report.to_dict(), "checkpoint_epoch": header["epoch"]}
    if 0 < t.sum() < t.size:
        roc = roc_curve(s, t)
        roc.to_csv(out / "roc.csv")
        result["roc_auc"] = roc.auc
    if t.sum() > 0:
        pr = pr_curve(s, t)
        pr.to_csv(out / "pr.csv")
        result["pr_auc"] = pr.auc
    (out / "eval.json").write_text(json.dumps(result, indent=2))
    return result


def cmd_augment(args) -> dict:
    spec = AugPipelineSpec.from_json(args.spec) if args.spec else profile(args.profile, _seed(args))
    if args.seed is not None and args.spec:
        spec = AugPipelineSpec(spec.steps, args.seed, spec.profile)
    index = scan(args.input)
    out = _out(args, "augment")
    samples = [load_sample(e) for e in index.entries]
    for i, (entry, sample) in enumerate(zip(index.entries, samples)):
        partners = [s for s in samples if s.image.shape == sample.image.shape]
        aug, records = apply_pipeline_traced(spec, sample, i, args.epoch, partners)
        write_sample(aug, out, entry.split, entry.city, entry.frame)
        prov = out / "provenance" / entry.split / entry.city / f"{entry.frame}.json"
        prov.parent.mkdir(parents=True, exist_ok=True)
        prov.write_text(json.dumps({"source": str(entry.image_path), "sample_index": i, "epoch": args.epoch,
                                    "master_seed": spec.master_seed, "steps": records}, indent=1))
    spec.to_json(out / "pipeline.json")
    return {"out": str(out), "samples": len(index.entries)}


def cmd_stats(args) -> dict:
    index = scan(args.data)
    out = _out(args, "stats")
    counts = stats.city_distribution(index)
    stats.write_city_distribution(counts, out / "cities.csv")
    mapping = LabelMapping(set(args.drivable_ids))
    a_name, b_name = args.splits
    masks_a = [load_sample(e, mapping, args.size).mask for e in index.split(a_name)]
    masks_b = [load_sample(e, mapping, args.size).mask for e in index.split(b_name)]
    report = {"totals": index.totals(), "warnings": index.warnings, "splits": [a_name, b_name]}
    if len(masks_a) >= 2 and len(masks_b) >= 2:
        cmp = stats.compare_splits(masks_a, masks_b, args.pairs, _seed(args))
        with open(out / "scatter.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["split", "drivable_fraction", "nondrivable_fraction"])
            for tag, d, nd in cmp.pop("scatter"):
                w.writerow([a_name if tag == "a" else b_name, repr(d), repr(nd)])
        report.update(cmp)
    else:
        report["note"] = "fewer than two masks in a split; tests skipped"
    (out / "stats.json").write_text(json.dumps(report, indent=2))
    return report


def cmd_bench(args) -> dict:
    if args.checkpoint:
        net, _ = checkpoint.load(args.checkpoint)
    else:
        net = build(_train_config(args).network, _seed(args))
    out = _out(args, "bench")
    res = benchmark_inference(net, args.resolution, args.runs, seed=_seed(args))
    res.to_csv(out / "latency.csv")
    res.to_json(out / "bench.json")
    return {"mean": res.mean, "std": res.std, "runs": len(res.runs), "fps": res.fps}


def cmd_synth(args) -> dict:
    out = _out(args, "synth")
    index = write_corpus(out, args.size, _seed(args), args.n_train, args.n_val, args.n_test, args.corrupt_val)
    index.to_json(out / "index.json")
    return {"out": str(out), "totals": index.totals()}


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "augment": cmd_augment, "stats": cmd_stats, "bench": cmd_bench,
            "synth": cmd_synth}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = COMMANDS[args.command](args)
    except (CAUNetError, OSError, ValueError) as exc:
        code = getattr(exc, "code", type(exc).__name__)
        msg = str(exc).replace("\n", " ")
        print(json.dumps({"error": code, "command": args.command, "message": msg}), file=sys.stderr)
        return 1
    print(json.dumps(result, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
