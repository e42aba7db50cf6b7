"""Pixel-level colour transforms. They never touch the mask."""
from __future__ import annotations

import numpy as np

from caunet.augment.resample import luma, resize_image, to_uint8
from caunet.data.cityscapes import Sample
from caunet.errors import ParameterError

GAMMA_RANGE = (0.5, 2.0)
DOWNSCALE_RANGE = (0.25, 0.9)
HIST_BINS = 256


def _check(name: str, value: float, lo: float, hi: float) -> None:
    if not lo <= value <= hi:
        raise ParameterError(f"{name}={value} outside [{lo}, {hi}]")


# -- CLAHE ------------------------------------------------------------------------
def clip_histogram(hist: np.ndarray, limit: int) -> np.ndarray:
    """Clip bins at ``limit`` and hand the excess back: evenly, then one extra count every few bins."""
    hist = hist.astype(np.int64).copy()
    excess = int(np.maximum(hist - limit, 0).sum())
    np.minimum(hist, limit, out=hist)
    batch, residual = divmod(excess, HIST_BINS)
    hist += batch
    if residual:
        step = max(HIST_BINS // residual, 1)
        hist[np.arange(0, HIST_BINS, step)[:residual]] += 1
    return hist


def tile_lut(tile: np.ndarray, clip_limit: float) -> np.ndarray:
    area = tile.size
    hist = np.bincount(tile.reshape(-1), minlength=HIST_BINS)
    if clip_limit > 0:
        hist = clip_histogram(hist, max(int(clip_limit * area / HIST_BINS), 1))
    return to_uint8(np.cumsum(hist) * ((HIST_BINS - 1) / area))


def clahe_gray(gray: np.ndarray, clip_limit: float = 2.0, tiles: tuple[int, int] = (8, 8)) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization of a uint8 plane.

    The plane is mirror-padded to a multiple of the tile grid; each pixel blends
    the lookup tables of its four nearest tile centres bilinearly.
    """
    if gray.dtype != np.uint8 or gray.ndim != 2:
        raise ParameterError("clahe expects an H×W uint8 plane")
    ty, tx = tiles
    if ty < 1 or tx < 1:
        raise ParameterError(f"tile grid must be positive, got {tiles}")
    if clip_limit < 0:
        raise ParameterError(f"clip limit must be non-negative, got {clip_limit}")
    h, w = gray.shape
    ph, pw = (-h) % ty, (-w) % tx
    src = np.pad(gray, ((0, ph), (0, pw)), mode="reflect") if (ph or pw) else gray
    th, tw = src.shape[0] // ty, src.shape[1] // tx
    luts = np.empty((ty, tx, HIST_BINS), np.float64)
    for i in range(ty):
        for j in range(tx):
            luts[i, j] = tile_lut(src[i * th:(i + 1) * th, j * tw:(j + 1) * tw], clip_limit)

    def axis_weights(n, size, count):
        f = np.arange(n) / size - 0.5
        a = np.floor(f).astype(np.int64)
        frac = f - a
        return np.maximum(a, 0), np.minimum(a + 1, count - 1), frac

    y1, y2, fy = axis_weights(h, th, ty)
    x1, x2, fx = axis_weights(w, tw, tx)
    v = gray.astype(np.int64)
    Y1, X1, Y2, X2 = y1[:, None], x1[None, :], y2[:, None], x2[None, :]
    FY, FX = fy[:, None], fx[None, :]
    top = luts[Y1, X1, v] * (1 - FX) + luts[Y1, X2, v] * FX
    bot = luts[Y2, X1, v] * (1 - FX) + luts[Y2, X2, v] * FX
    return to_uint8(top * (1 - FY) + bot * FY)


def clahe(sample: Sample, clip_limit: float = 2.0, tiles: tuple[int, int] = (8, 8)) -> Sample:
    """CLAHE on the luma; chroma is kept by shifting all three channels by the luma change."""
    y = luma(sample.image)
    y_eq = clahe_gray(to_uint8(y), clip_limit, tuple(tiles)).astype(np.float64)
    return sample.replace(to_uint8(sample.image + (y_eq - y)[..., None]))


# -- point operations --------------------------------------------------------------
def gamma_lut(g: float) -> np.ndarray:
    return to_uint8(255.0 * (np.arange(256) / 255.0) ** g)


def random_gamma(sample: Sample, gamma: float) -> Sample:
    _check("gamma", gamma, *GAMMA_RANGE)
    return sample.replace(gamma_lut(gamma)[sample.image])


def posterize(sample: Sample, bits: int) -> Sample:
    if int(bits) != bits or not 1 <= bits <= 8:
        raise ParameterError(f"posterize bits must be an integer in [1, 8], got {bits}")
    keep = np.uint8((0xFF << (8 - int(bits))) & 0xFF)
    return sample.replace(sample.image & keep)


def color_jitter(sample: Sample, brightness: float = 1.0, contrast: float = 1.0,
                 saturation: float = 1.0) -> Sample:
    """Multiplicative brightness, contrast about the mean luma, saturation about per-pixel luma."""
    for name, v in (("brightness", brightness), ("contrast", contrast), ("saturation", saturation)):
        _check(name, v, 0.0, 4.0)
    if brightness == contrast == saturation == 1.0:
        return sample.replace(sample.image.copy())
    x = sample.image.astype(np.float64) * brightness
    m = luma(x).mean()
    x = (x - m) * contrast + m
    g = luma(x)[..., None]
    x = (x - g) * saturation + g
    return sample.replace(to_uint8(x))


def downscale(sample: Sample, factor: float) -> Sample:
    """Resample down by ``factor`` and back up: loses high-frequency detail."""
    _check("downscale factor", factor, *DOWNSCALE_RANGE)
    h, w = sample.mask.shape
    small = resize_image(sample.image, max(1, int(round(h * factor))), max(1, int(round(w * factor))))
    return sample.replace(to_uint8(resize_image(small, h, w)))


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Float RGB in [0, 1] to HSV with hue in [0, 1)."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx, mn = rgb.max(axis=-1), rgb.min(axis=-1)
    d = mx - mn
    safe = np.where(d > 0, d, 1.0)
    h = np.where(mx == r, ((g - b) / safe) % 6, np.where(mx == g, (b - r) / safe + 2, (r - g) / safe + 4))
    h = np.where(d > 0, h / 6.0, 0.0) % 1.0
    s = np.where(mx > 0, d / np.where(mx > 0, mx, 1.0), 0.0)
    return np.stack([h, s, mx], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0] % 1.0, hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6).astype(np.int64) % 6
    f = h * 6 - np.floor(h * 6)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    choices = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    out = np.zeros(hsv.shape)
    for k, (cr, cg, cb) in enumerate(choices):
        sel = i == k
        out[..., 0] = np.where(sel, cr, out[..., 0])
        out[..., 1] = np.where(sel, cg, out[..., 1])
        out[..., 2] = np.where(sel, cb, out[..., 2])
    return out


def hue_saturation(sample: Sample, hue_shift: float = 0.0, sat_shift: float = 0.0, val_shift: float = 0.0) -> Sample:
    """Shift hue (fraction of a turn), saturation and value (additive, in [−1, 1])."""
    for name, v in (("hue_shift", hue_shift), ("sat_shift", sat_shift), ("val_shift", val_shift)):
        _check(name, v, -1.0, 1.0)
    if hue_shift == sat_shift == val_shift == 0.0:
        return sample.replace(sample.image.copy())
    hsv = rgb_to_hsv(sample.image / 255.0)
    hsv[..., 0] = (hsv[..., 0] + hue_shift) % 1.0
    hsv[..., 1] = np.clip(hsv[..., 1] + sat_shift, 0, 1)
    hsv[..., 2] = np.clip(hsv[..., 2] + val_shift, 0, 1)
    return sample.replace(to_uint8(hsv_to_rgb(hsv) * 255.0))
