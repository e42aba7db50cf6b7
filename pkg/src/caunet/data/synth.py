"""Synthetic perspective road scenes for desk-scale experiments."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from caunet.data.cityscapes import ROAD_ID, DatasetIndex, Sample, write_sample

SKY_ID = 23
VEGETATION_ID = 21
SIDEWALK_ID = 8


@dataclass(frozen=True)
class SynthConfig:
    bottom_width: tuple[float, float] = (0.7, 1.0)  # fraction of image width
    top_width: tuple[float, float] = (0.06, 0.2)
    horizon: tuple[float, float] = (0.35, 0.55)  # fraction of image height
    max_center_shift: float = 0.15  # top centre offset, fraction of width
    noise_sigma: float = 8.0


def sample_rng(seed: int, index: int, *salt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index, *salt]))


def _road_intervals(w: int, h: int, horizon_row: int, bottom: tuple[float, float],
                    top: tuple[float, float]) -> list[tuple[int, int, int]]:
    """(row, left, right) inclusive spans, each overlapping the previous one."""
    spans = []
    prev = None
    for y in range(horizon_row, h):
        s = (y - horizon_row + 0.5) / (h - horizon_row)
        cx = top[0] + s * (bottom[0] - top[0])
        half = 0.5 * (top[1] + s * (bottom[1] - top[1]))
        left = max(0, int(np.ceil(cx - half - 0.5)))
        right = min(w - 1, int(np.floor(cx + half - 0.5)))
        if right < left:  # keep at least the centre pixel
            left = right = int(np.clip(round(cx - 0.5), 0, w - 1))
        if prev is not None:  # rows must touch so the road stays one component
            left, right = min(left, prev[1]), max(right, prev[0])
        spans.append((y, left, right))
        prev = (left, right)
    return spans


def generate_one(size: tuple[int, int], seed: int, index: int, config: SynthConfig = SynthConfig()
                 ) -> tuple[Sample, np.ndarray]:
    """One scene and its label-id plane. ``size`` is (width, height)."""
    w, h = size
    rng = sample_rng(seed, index)
    horizon_row = int(round(rng.uniform(*config.horizon) * h))
    bw, tw = rng.uniform(*config.bottom_width) * w, rng.uniform(*config.top_width) * w
    bottom_cx = w / 2 + rng.uniform(-0.5, 0.5) * max(0.0, w - bw)
    top_cx = w / 2 + rng.uniform(-1, 1) * config.max_center_shift * w
    spans = _road_intervals(w, h, horizon_row, (bottom_cx, bw), (top_cx, tw))

    labels = np.full((h, w), VEGETATION_ID, np.uint8)
    labels[:horizon_row] = SKY_ID
    mask = np.zeros((h, w), np.uint8)
    for y, l, r in spans:
        mask[y, l:r + 1] = 1
    labels[mask == 1] = ROAD_ID

    img = np.empty((h, w, 3), np.float64)
    rows = np.linspace(0, 1, max(horizon_row, 1))[:, None, None]
    sky_top, sky_low = rng.uniform([60, 90, 160], [120, 150, 230]), rng.uniform([160, 180, 200], [220, 230, 250])
    img[:horizon_row] = sky_top + rows * (sky_low - sky_top)
    ground = rng.uniform([40, 70, 20], [110, 150, 70])
    img[horizon_row:] = ground
    yy, xx = np.mgrid[0:h, 0:w]
    stripes = 18 * np.sin(xx * rng.uniform(0.3, 1.2) + yy * rng.uniform(0.1, 0.6))[..., None]
    img[horizon_row:] += stripes[horizon_row:]
    road = rng.uniform(70, 130)
    img[mask == 1] = road + rng.uniform(-8, 8, size=3)
    # dashed centre marking, still part of the drivable class
    for y, l, r in spans:
        if (y // 3) % 2 == 0 and r - l >= 6:
            c = (l + r) // 2
            img[y, c] = 230.0
    img += rng.normal(0, config.noise_sigma, size=img.shape)
    image = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return Sample(image, mask, f"synth_{seed}_{index:06d}"), labels


def synth_generate(n: int, size: tuple[int, int], seed: int, config: SynthConfig = SynthConfig(),
                   start: int = 0) -> list[Sample]:
    return [generate_one(size, seed, start + i, config)[0] for i in range(n)]


def corrupt(image: np.ndarray, seed: int, index: int, severity: float = 1.0) -> np.ndarray:
    """Distribution shift for validation: fog veil, colour cast, blur and sensor noise."""
    rng = sample_rng(seed, index, 0xC0)
    x = image.astype(np.float64)
    alpha = severity * rng.uniform(0.25, 0.45)
    x = (1 - alpha) * x + alpha * rng.uniform(170, 230)
    x *= 1 + severity * rng.uniform(-0.2, 0.2, size=3)
    pad = np.pad(x, ((1, 1), (1, 1), (0, 0)), mode="edge")
    x = sum(pad[dy:dy + x.shape[0], dx:dx + x.shape[1]] for dy in range(3) for dx in range(3)) / 9.0
    x += rng.normal(0, severity * 12.0, size=x.shape)
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


def write_corpus(root: str | Path, size: tuple[int, int], seed: int, n_train: int, n_val: int,
                 n_test: int = 0, corrupt_val: bool = False, city: str = "synthtown") -> DatasetIndex:
    """Generate a corpus in the Cityscapes layout. Frame indices never repeat across splits."""
    from caunet.data.cityscapes import scan

    root = Path(root)
    offset = 0
    for split, n in (("train", n_train), ("val", n_val), ("test", n_test)):
        for i in range(n):
            sample, labels = generate_one(size, seed, offset + i)
            if split == "val" and corrupt_val:
                sample = Sample(corrupt(sample.image, seed, offset + i), sample.mask, sample.name)
            write_sample(sample, root, split, city, f"{city}_{seed:06d}_{offset + i:06d}", labels)
        offset += n
    return scan(root)
