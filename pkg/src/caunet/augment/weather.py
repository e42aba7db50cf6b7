"""Weather overlays: fog, rain, snow and sun flare. Image-only; all outputs clamp to [0, 255]."""
from __future__ import annotations

import numpy as np

from caunet.augment.degrade import gaussian_blur_array
from caunet.augment.resample import luma, to_uint8
from caunet.data.cityscapes import Sample
from caunet.errors import ParameterError


def _unit(name: str, v: float) -> None:
    if not 0.0 <= v <= 1.0:
        raise ParameterError(f"{name}={v} outside [0, 1]")


def fog_alpha(shape, density: float, center: tuple[float, float]) -> np.ndarray:
    """Blend weight: ``density`` at the centre, falling radially to half of it at the far corner."""
    h, w = shape
    cy, cx = center[0] * (h - 1), center[1] * (w - 1)
    yy, xx = np.mgrid[0:h, 0:w]
    r = np.hypot(yy - cy, xx - cx)
    rmax = max(r.max(), 1.0)
    return density * (1.0 - 0.5 * r / rmax)


def fog(sample: Sample, density: float, center: tuple[float, float] = (0.5, 0.5)) -> Sample:
    _unit("fog density", density)
    a = fog_alpha(sample.mask.shape, density, center)[..., None]
    # integer-side blend: density 0 is exact, and any positive weight moves every pixel toward 255
    gap = 255.0 - sample.image.astype(np.float64)
    out = 255.0 - np.floor(gap * (1.0 - a))
    return sample.replace(out.astype(np.uint8))


def rain(sample: Sample, drops: np.ndarray, slant: float, drop_length: int,
         color=(200, 200, 200), dim: float = 0.85) -> Sample:
    """Draw streaks from each (row, col) in ``drops``, darken slightly and soften with a small blur."""
    if drop_length < 1:
        raise ParameterError(f"rain drop length must be >= 1, got {drop_length}")
    _unit("rain dim", dim)
    h, w = sample.mask.shape
    x = sample.image.astype(np.float64) * dim
    t = np.arange(drop_length)
    for y0, x0 in np.asarray(drops, dtype=np.int64).reshape(-1, 2):
        ys = y0 + t
        xs = np.rint(x0 + slant * t).astype(np.int64)
        ok = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
        x[ys[ok], xs[ok]] = color
    return sample.replace(to_uint8(gaussian_blur_array(x, 0.6)))


def snow(sample: Sample, coeff: float, brightness: float = 2.0) -> Sample:
    """Brighten every pixel whose luma falls below a threshold that grows with ``coeff``."""
    _unit("snow coefficient", coeff)
    if coeff == 0:
        return sample.replace(sample.image.copy())
    thresh = coeff * 255.0 / 2 + 255.0 / 3
    x = sample.image.astype(np.float64)
    sel = (luma(x) < thresh)[..., None]
    out = np.where(sel, x * brightness + 30.0 * coeff, x)
    return sample.replace(to_uint8(out))


def sunflare(sample: Sample, center: tuple[float, float], radius: float, intensity: float = 0.8,
             color=(255, 245, 220)) -> Sample:
    """Additive disc whose strength fades quadratically from the centre to ``radius``·max(H, W)."""
    _unit("flare intensity", intensity)
    if radius <= 0:
        raise ParameterError(f"flare radius must be positive, got {radius}")
    h, w = sample.mask.shape
    cy, cx = center[0] * (h - 1), center[1] * (w - 1)
    yy, xx = np.mgrid[0:h, 0:w]
    r = np.hypot(yy - cy, xx - cx) / (radius * max(h, w))
    g = intensity * np.clip(1.0 - r, 0.0, 1.0) ** 2
    out = sample.image + g[..., None] * np.asarray(color, dtype=np.float64)
    return sample.replace(to_uint8(out))


__all__ = ["fog", "fog_alpha", "rain", "snow", "sunflare"]
