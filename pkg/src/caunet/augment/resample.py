"""Coordinate-map resampling shared by the geometric and distortion transforms.

Coordinates use pixel centres: pixel (i, j) sits at (i, j). Maps give, for every
output pixel, the source coordinate it reads from.
"""
from __future__ import annotations

import numpy as np


def to_uint8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


def bilinear(img: np.ndarray, sy: np.ndarray, sx: np.ndarray, clamp: bool = False) -> np.ndarray:
    """Bilinear sampling of an H×W×C float image.

    Out-of-frame neighbours contribute 0, or, with ``clamp``, the nearest edge pixel.
    """
    h, w = img.shape[:2]
    if clamp:
        sy = np.clip(sy, 0, h - 1)
        sx = np.clip(sx, 0, w - 1)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    fy = (sy - y0)[..., None]
    fx = (sx - x0)[..., None]
    out = np.zeros(sy.shape + img.shape[2:], dtype=np.float64)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            yy, xx = y0 + dy, x0 + dx
            if clamp:
                yy, xx = np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)
            valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            vals = img[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
            out += np.where(valid[..., None], vals * (wy * wx), 0.0)
    return out


def nearest(arr: np.ndarray, sy: np.ndarray, sx: np.ndarray, fill=0) -> np.ndarray:
    h, w = arr.shape[:2]
    iy = np.floor(sy + 0.5).astype(np.int64)
    ix = np.floor(sx + 0.5).astype(np.int64)
    valid = (iy >= 0) & (iy < h) & (ix >= 0) & (ix < w)
    out = arr[np.clip(iy, 0, h - 1), np.clip(ix, 0, w - 1)]
    return np.where(valid, out, fill).astype(arr.dtype)


def resize_coords(in_size: int, out_size: int, offset: float = 0.0) -> np.ndarray:
    """Half-pixel-centre source coordinates for a 1-D resize of a window starting at ``offset``."""
    return offset + (np.arange(out_size) + 0.5) * (in_size / out_size) - 0.5


def resize_image(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with edge clamping; returns float64."""
    h, w = img.shape[:2]
    sy = resize_coords(h, out_h)[:, None] * np.ones((1, out_w))
    sx = np.ones((out_h, 1)) * resize_coords(w, out_w)[None, :]
    return bilinear(img.astype(np.float64), sy, sx, clamp=True)


def resize_mask(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = mask.shape
    iy = np.clip(np.floor((np.arange(out_h) + 0.5) * h / out_h), 0, h - 1).astype(np.int64)
    ix = np.clip(np.floor((np.arange(out_w) + 0.5) * w / out_w), 0, w - 1).astype(np.int64)
    return mask[iy[:, None], ix[None, :]]


def convolve_separable(img: np.ndarray, ky: np.ndarray, kx: np.ndarray) -> np.ndarray:
    """Separable correlation with mirror (edge-excluded) padding; H×W×C float in and out."""
    ry, rx = len(ky) // 2, len(kx) // 2
    x = img.astype(np.float64)
    xp = np.pad(x, ((ry, ry), (0, 0), (0, 0)), mode="reflect" if x.shape[0] > ry else "edge")
    x = sum(k * xp[i:i + img.shape[0]] for i, k in enumerate(ky))
    xp = np.pad(x, ((0, 0), (rx, rx), (0, 0)), mode="reflect" if x.shape[1] > rx else "edge")
    return sum(k * xp[:, i:i + img.shape[1]] for i, k in enumerate(kx))


def convolve2d(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Dense 2-D correlation with mirror padding, skipping zero taps."""
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2
    x = img.astype(np.float64)
    mode = "reflect" if x.shape[0] > ry and x.shape[1] > rx else "edge"
    xp = np.pad(x, ((ry, ry), (rx, rx), (0, 0)), mode=mode)
    out = np.zeros_like(x)
    for i, j in zip(*np.nonzero(kernel)):
        out += kernel[i, j] * xp[i:i + x.shape[0], j:j + x.shape[1]]
    return out


LUMA = np.array([0.299, 0.587, 0.114])


def luma(img: np.ndarray) -> np.ndarray:
    return img.astype(np.float64) @ LUMA
