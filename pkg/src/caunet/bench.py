"""Inference latency benchmark: batch 1, one untimed warm-up pass, then ``runs`` timed forwards."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from caunet.errors import ConfigurationError
from caunet.network import CAUNet
from caunet.tensor import Tensor, no_grad

DEFAULT_RESOLUTION = (1024, 512)  # (width, height)
DEFAULT_RUNS = 20


@dataclass
class BenchResult:
    mean: float  # seconds per frame
    std: float  # population standard deviation over the timed runs
    runs: list[float]
    resolution: tuple[int, int]

    @property
    def fps(self) -> float:
        return 1.0 / self.mean if self.mean > 0 else math.inf

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["run", "seconds"])
            for i, s in enumerate(self.runs):
                w.writerow([i, repr(s)])

    def to_json(self, path: str | Path) -> None:
        d = asdict(self)
        d["resolution"] = list(self.resolution)
        d["fps"] = self.fps
        Path(path).write_text(json.dumps(d, indent=2))


def summarize(durations: list[float], resolution=DEFAULT_RESOLUTION) -> BenchResult:
    arr = np.asarray(durations, dtype=np.float64)
    return BenchResult(float(arr.mean()), float(arr.std()), [float(d) for d in durations], tuple(resolution))


def benchmark_inference(net: CAUNet, resolution: tuple[int, int] = DEFAULT_RESOLUTION, runs: int = DEFAULT_RUNS,
                        clock: Callable[[], float] = time.perf_counter, seed: int = 0,
                        forward: Callable[[Tensor], object] | None = None) -> BenchResult:
    """Time ``runs`` eval-mode forwards of a fixed random frame.

    ``clock`` and ``forward`` are injectable so the protocol can be checked
    with synthetic durations.
    """
    if runs < 1:
        raise ConfigurationError(f"runs must be >= 1, got {runs}")
    w, h = resolution
    net.check_input((1, net.config.in_channels, h, w))
    x = Tensor(np.random.default_rng(seed).random((1, net.config.in_channels, h, w)).astype(net.dtype))
    fwd = forward or (lambda t: net(t, training=False))
    durations = []
    with no_grad():
        fwd(x)  # warm-up, not timed
        for _ in range(runs):
            t0 = clock()
            fwd(x)
            durations.append(clock() - t0)
    return summarize(durations, resolution)
