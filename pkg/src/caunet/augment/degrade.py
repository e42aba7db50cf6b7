"""Blur, sensor noise and lens distortion. Image-only."""
from __future__ import annotations

import math

import numpy as np

from caunet.augment.resample import bilinear, convolve2d, convolve_separable, to_uint8
from caunet.data.cityscapes import Sample
from caunet.errors import ParameterError


def gaussian_kernel1d(sigma: float, radius: int | None = None) -> np.ndarray:
    if not sigma > 0:
        raise ParameterError(f"gaussian sigma must be positive, got {sigma}")
    r = int(math.ceil(3 * sigma)) if radius is None else int(radius)
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur_array(img: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel1d(sigma)
    return convolve_separable(img, k, k)


def gaussian_blur(sample: Sample, sigma: float) -> Sample:
    return sample.replace(to_uint8(gaussian_blur_array(sample.image, sigma)))


def glass_blur(sample: Sample, sigma: float, max_delta: int, offsets: np.ndarray) -> Sample:
    """Blur, scatter each pixel from a random neighbour within ``max_delta``, blur again.

    ``offsets`` is an integer H×W×2 array of (dy, dx) drawn by the caller.
    """
    if max_delta < 1:
        raise ParameterError(f"glass blur max_delta must be >= 1, got {max_delta}")
    h, w = sample.mask.shape
    if offsets.shape != (h, w, 2) or np.abs(offsets).max(initial=0) > max_delta:
        raise ParameterError("glass blur offsets must be H×W×2 within ±max_delta")
    x = gaussian_blur_array(sample.image, sigma)
    yy, xx = np.mgrid[0:h, 0:w]
    x = x[np.clip(yy + offsets[..., 0], 0, h - 1), np.clip(xx + offsets[..., 1], 0, w - 1)]
    return sample.replace(to_uint8(gaussian_blur_array(x, sigma)))


def motion_kernel(length: int, angle: float) -> np.ndarray:
    """Normalized line kernel through the centre of a length×length grid."""
    if int(length) != length or length < 1 or length % 2 == 0:
        raise ParameterError(f"motion blur length must be a positive odd integer, got {length}")
    length = int(length)
    k = np.zeros((length, length))
    r = length // 2
    t = math.radians(angle)
    for s in np.linspace(-r, r, 4 * length + 1):
        k[int(round(r - s * math.sin(t))), int(round(r + s * math.cos(t)))] = 1.0
    return k / k.sum()


def motion_blur(sample: Sample, length: int, angle: float) -> Sample:
    k = motion_kernel(length, angle)
    return sample.replace(to_uint8(convolve2d(sample.image, k)))


def iso_noise(sample: Sample, sigma_lum: float, sigma_col: float, rng: np.random.Generator) -> Sample:
    """Gaussian luminance noise shared by the channels plus independent per-channel noise (8-bit units)."""
    if sigma_lum < 0 or sigma_col < 0:
        raise ParameterError("iso noise sigmas must be non-negative")
    h, w = sample.mask.shape
    noise = rng.normal(0.0, 1.0, size=(h, w, 1)) * sigma_lum + rng.normal(0.0, 1.0, size=(h, w, 3)) * sigma_col
    return sample.replace(to_uint8(sample.image + noise))


def optical_distortion(sample: Sample, k: float) -> Sample:
    """Radial remap: source radius r·(1 + k·r²), r normalized by the half-diagonal; edges clamp."""
    if not -1.0 <= k <= 1.0:
        raise ParameterError(f"distortion coefficient {k} outside [-1, 1]")
    if k == 0:
        return sample.replace(sample.image.copy())
    h, w = sample.mask.shape
    cy, cx = (h - 1) / 2, (w - 1) / 2
    norm = math.hypot(cy, cx) or 1.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = (yy - cy) / norm, (xx - cx) / norm
    f = 1 + k * (dy * dy + dx * dx)
    img = bilinear(sample.image.astype(np.float64), cy + dy * f * norm, cx + dx * f * norm, clamp=True)
    return sample.replace(to_uint8(img))
