"""Geometric transforms. Images resample bilinearly, masks by nearest neighbour, out-of-frame is 0."""
from __future__ import annotations

import math

import numpy as np

from caunet.augment.resample import bilinear, nearest, resize_image, resize_mask, to_uint8
from caunet.data.cityscapes import Sample
from caunet.errors import ParameterError

MAX_CROP_DRAWS = 8


# -- hflip -----------------------------------------------------------------------
def hflip_mask(mask: np.ndarray) -> np.ndarray:
    return mask[:, ::-1].copy()


def hflip(sample: Sample) -> Sample:
    return sample.replace(sample.image[:, ::-1].copy(), hflip_mask(sample.mask))


# -- affine warps about the image centre ---------------------------------------------
def _rotation_coords(h: int, w: int, degrees: float):
    """Source coordinates for a rotation by ``degrees``, counter-clockwise as displayed (rows point down)."""
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    cy, cx = (h - 1) / 2, (w - 1) / 2
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    # inverse rotation of the output grid
    return cy + s * dx + c * dy, cx + c * dx - s * dy


def rotate_mask(mask: np.ndarray, degrees: float) -> np.ndarray:
    if degrees == 0:
        return mask.copy()
    sy, sx = _rotation_coords(*mask.shape, degrees)
    return nearest(mask, sy, sx)


def rotate(sample: Sample, degrees: float) -> Sample:
    h, w = sample.mask.shape
    sy, sx = _rotation_coords(h, w, degrees)
    img = to_uint8(bilinear(sample.image.astype(np.float64), sy, sx))
    return sample.replace(img, rotate_mask(sample.mask, degrees))


def _scale_coords(h: int, w: int, factor: float):
    cy, cx = (h - 1) / 2, (w - 1) / 2
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return cy + (yy - cy) / factor, cx + (xx - cx) / factor


def scale_mask(mask: np.ndarray, factor: float) -> np.ndarray:
    sy, sx = _scale_coords(*mask.shape, factor)
    return nearest(mask, sy, sx)


def scale(sample: Sample, factor: float) -> Sample:
    """Zoom about the centre keeping the frame size; factor > 1 zooms in."""
    if factor <= 0:
        raise ParameterError(f"scale factor must be positive, got {factor}")
    h, w = sample.mask.shape
    sy, sx = _scale_coords(h, w, factor)
    img = to_uint8(bilinear(sample.image.astype(np.float64), sy, sx))
    return sample.replace(img, scale_mask(sample.mask, factor))


# -- crop ------------------------------------------------------------------------------
def _check_crop(shape, top: int, left: int, ch: int, cw: int) -> None:
    h, w = shape
    if ch < 1 or cw < 1 or ch > h or cw > w:
        raise ParameterError(f"crop {ch}x{cw} does not fit image {h}x{w}")
    if not (0 <= top <= h - ch and 0 <= left <= w - cw):
        raise ParameterError(f"crop origin ({top}, {left}) out of range for {ch}x{cw} in {h}x{w}")


def crop_mask(mask: np.ndarray, top: int, left: int, ch: int, cw: int) -> np.ndarray:
    h, w = mask.shape
    _check_crop(mask.shape, top, left, ch, cw)
    return resize_mask(mask[top:top + ch, left:left + cw], h, w)


def crop(sample: Sample, top: int, left: int, ch: int, cw: int) -> Sample:
    """Cut a ch×cw window and resample it back to the full frame size."""
    h, w = sample.mask.shape
    _check_crop((h, w), top, left, ch, cw)
    window = sample.image[top:top + ch, left:left + cw]
    img = window.copy() if (ch, cw) == (h, w) else to_uint8(resize_image(window, h, w))
    return sample.replace(img, crop_mask(sample.mask, top, left, ch, cw))


def draw_crop(rng: np.random.Generator, mask: np.ndarray, size=None, scale_range=(0.6, 1.0)) -> dict | None:
    """Pick a crop window; windows whose mask turns constant while the source is not are redrawn.

    Returns None after ``MAX_CROP_DRAWS`` degenerate draws (the step is then skipped).
    """
    h, w = mask.shape
    if size is not None:
        ch, cw = int(size[0]), int(size[1])
        _check_crop((h, w), 0, 0, ch, cw)
    mixed = 0 < int(mask.sum()) < mask.size
    for _ in range(MAX_CROP_DRAWS):
        if size is None:
            s = math.sqrt(rng.uniform(*scale_range))
            ch, cw = max(1, int(round(h * s))), max(1, int(round(w * s)))
        top = int(rng.integers(0, h - ch + 1))
        left = int(rng.integers(0, w - cw + 1))
        win = mask[top:top + ch, left:left + cw]
        if not mixed or 0 < int(win.sum()) < win.size:
            return {"top": top, "left": left, "height": ch, "width": cw}
    return None


# -- mixcut ------------------------------------------------------------------------
MIXCUT_AREA = (0.1, 0.4)


def paste(a: Sample, b: Sample, top: int, left: int, ph: int, pw: int) -> Sample:
    """Copy b's image and mask inside the rectangle into a."""
    if a.mask.shape != b.mask.shape or a.image.shape != b.image.shape:
        raise ParameterError(f"mixcut needs equal sizes, got {a.image.shape} and {b.image.shape}")
    img, mask = a.image.copy(), a.mask.copy()
    img[top:top + ph, left:left + pw] = b.image[top:top + ph, left:left + pw]
    mask[top:top + ph, left:left + pw] = b.mask[top:top + ph, left:left + pw]
    return a.replace(img, mask)


def draw_mixcut(rng: np.random.Generator, shape, area=MIXCUT_AREA) -> dict:
    lo, hi = area
    if not 0 < lo <= hi <= 1:
        raise ParameterError(f"mixcut area range must lie in (0, 1], got {area}")
    h, w = shape
    frac = rng.uniform(lo, hi)
    aspect = math.exp(rng.uniform(math.log(0.5), math.log(2.0)))
    ph = int(np.clip(round(math.sqrt(frac * h * w * aspect)), 1, h))
    pw = int(np.clip(round(frac * h * w / ph), 1, w))
    top = int(rng.integers(0, h - ph + 1))
    left = int(rng.integers(0, w - pw + 1))
    return {"top": top, "left": left, "height": ph, "width": pw, "area_fraction": frac}


def mixcut(a: Sample, b: Sample, rng: np.random.Generator, area=MIXCUT_AREA) -> Sample:
    if a.mask.shape != b.mask.shape:
        raise ParameterError(f"mixcut needs equal sizes, got {a.mask.shape} and {b.mask.shape}")
    p = draw_mixcut(rng, a.mask.shape, area)
    return paste(a, b, p["top"], p["left"], p["height"], p["width"])


__all__ = [
    "hflip", "hflip_mask", "rotate", "rotate_mask", "scale", "scale_mask", "crop", "crop_mask", "draw_crop",
    "paste", "draw_mixcut", "mixcut",
]
