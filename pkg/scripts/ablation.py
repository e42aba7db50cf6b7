"""Light vs heavy augmentation under a shifted validation split.

Each seed trains two identical networks on the same clean synthetic corpus,
one per profile, and validates on frames passed through ``corrupt``. The
train/val accuracy gap at the final epoch is compared per seed.
"""
from __future__ import annotations

import argparse
import json
from dataclasses import dataclass
from pathlib import Path

from caunet.data import synth_generate
from caunet.data.synth import corrupt
from caunet.network import NetworkConfig
from caunet.train import TrainConfig, train


@dataclass
class AblationSetup:
    size: tuple[int, int] = (32, 32)
    n_train: int = 16
    n_val: int = 16
    epochs: int = 40
    depth: int = 2
    base_channels: int = 8
    severity: float = 1.0


def corpus(setup: AblationSetup, seed: int):
    tr = synth_generate(setup.n_train, setup.size, seed)
    va = synth_generate(setup.n_val, setup.size, seed, start=setup.n_train)
    va = [s.replace(corrupt(s.image, seed, setup.n_train + i, setup.severity)) for i, s in enumerate(va)]
    return tr, va


def run_seed(setup: AblationSetup, seed: int, out: Path | None = None) -> dict:
    tr, va = corpus(setup, seed)
    result = {"seed": seed}
    for name in ("light", "heavy"):
        cfg = TrainConfig(epochs=setup.epochs, lr_switch_epoch=setup.epochs, profile=name, seed=seed,
                          resolution=setup.size,
                          network=NetworkConfig(depth=setup.depth, base_channels=setup.base_channels))
        _, log = train(cfg, tr, va, out_dir=None if out is None else out / f"seed{seed}_{name}")
        last = log.last()
        result[name] = {"acc": last["acc"], "val_acc": last["val_acc"], "gap": last["acc"] - last["val_acc"],
                        "val_iou": last["val_iou"]}
    result["heavy_gap_le_light"] = result["heavy"]["gap"] <= result["light"]["gap"]
    return result


def run_ablation(seeds=(0, 1, 2), setup: AblationSetup | None = None, out: Path | None = None) -> dict:
    setup = setup or AblationSetup()
    per_seed = [run_seed(setup, s, out) for s in seeds]
    wins = sum(r["heavy_gap_le_light"] for r in per_seed)
    return {"setup": setup.__dict__, "seeds": per_seed, "wins": wins, "majority": wins * 2 > len(per_seed)}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--out", type=Path, default=Path("runs/ablation"))
    args = ap.parse_args()
    result = run_ablation(tuple(args.seeds), AblationSetup(epochs=args.epochs), args.out)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "ablation.json").write_text(json.dumps(result, indent=2, default=list))
    print(json.dumps(result, indent=2, default=list))


if __name__ == "__main__":
    main()
