"""Memorisation run: depth-2 network on 8 synthetic 64×64 frames for 300 epochs.

Writes the usual training artifacts to --out and prints the final train IoU,
wall-clock and the 20-epoch loss-window check.
"""
from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from caunet.data import synth_generate
from caunet.network import NetworkConfig
from caunet.train import TrainConfig, train

WINDOW, START, UPTICK = 20, 50, 0.05


def window_violations(losses: list[float], start: int = START, window: int = WINDOW, slack: float = UPTICK) -> list[int]:
    """Window starts after ``start`` whose final loss exceeds the opening loss by more than ``slack``."""
    bad = []
    for s in range(start, len(losses) - window + 1):
        if losses[s + window - 1] > losses[s] * (1 + slack):
            bad.append(s)
    return bad


def run_overfit(seed: int = 0, epochs: int = 300, out: Path | None = None, verbose: bool = False) -> dict:
    samples = synth_generate(8, (64, 64), seed)
    cfg = TrainConfig(epochs=epochs, lr_switch_epoch=min(100, epochs), network=NetworkConfig(depth=2), seed=seed)
    t0 = time.perf_counter()
    log = (lambda r: print(f"epoch {r['epoch']:3d} loss {r['loss']:.4f} iou {r['iou']:.4f}", flush=True)) \
        if verbose else None
    _, runlog = train(cfg, samples, samples, out_dir=out, log=log)
    elapsed = time.perf_counter() - t0
    clean = [r["train_eval_loss"] for r in runlog.rows]
    return {"final_train_iou": runlog.last()["iou"], "best_train_iou": max(r["iou"] for r in runlog.rows),
            "epochs": len(runlog.rows), "seconds": elapsed,
            "first_epoch_iou_095": next((r["epoch"] for r in runlog.rows if r["iou"] >= 0.95), None),
            "loss_window_violations": window_violations(clean),
            "windows_checked": max(len(clean) - WINDOW + 1 - START, 0)}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--out", type=Path, default=Path("runs/overfit"))
    ap.add_argument("--verbose", action="store_true")
    args = ap.parse_args()
    result = run_overfit(args.seed, args.epochs, args.out, args.verbose)
    (args.out / "overfit.json").write_text(json.dumps(result, indent=2))
    print(json.dumps(result, indent=2))


if __name__ == "__main__":
    main()
