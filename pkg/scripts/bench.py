"""Latency at batch size 1: one warm-up pass, then 20 timed forwards.

The default network is the full depth-4 model at 1024×512; use --depth and
--resolution for quicker desk runs.
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

from caunet import checkpoint
from caunet.bench import DEFAULT_RUNS, benchmark_inference
from caunet.cli import _size
from caunet.network import NetworkConfig, build


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--checkpoint", type=Path)
    ap.add_argument("--depth", type=int, default=4)
    ap.add_argument("--resolution", type=_size, default=(1024, 512))
    ap.add_argument("--runs", type=int, default=DEFAULT_RUNS)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("runs/bench"))
    args = ap.parse_args()
    if args.checkpoint:
        net, _ = checkpoint.load(args.checkpoint)
    else:
        net = build(NetworkConfig(depth=args.depth), args.seed)
    res = benchmark_inference(net, args.resolution, args.runs, seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    res.to_csv(args.out / "latency.csv")
    res.to_json(args.out / "bench.json")
    print(json.dumps({"mean_s": res.mean, "std_s": res.std, "fps": res.fps, "runs": len(res.runs)}, indent=2))


if __name__ == "__main__":
    main()
