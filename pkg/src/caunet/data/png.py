"""PNG codec boundary (Pillow). Everything past this module is plain uint8 numpy."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from caunet.errors import DecodeError


def _to_uint8(arr: np.ndarray) -> np.ndarray:
    if arr.dtype == np.uint8:
        return arr
    if arr.dtype in (np.uint16, np.int32, np.uint32):
        # 16-bit sources: keep the high byte
        return (arr.astype(np.uint32) >> 8).clip(0, 255).astype(np.uint8)
    if arr.dtype == np.bool_:
        return arr.astype(np.uint8) * 255
    raise DecodeError(f"unsupported pixel type {arr.dtype}")


def read_png(path: str | Path, mode: str | None = None) -> np.ndarray:
    """Decode to uint8. ``mode`` is "rgb" (H×W×3), "gray" (H×W) or None (as stored)."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if mode == "rgb" and im.mode not in ("RGB", "I;16", "I"):
                im = im.convert("RGB")
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"cannot decode PNG {path}: {exc}", path=str(path)) from exc
    arr = _to_uint8(arr)
    if mode == "rgb" and arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if mode == "gray" and arr.ndim == 3:
        raise DecodeError(f"expected a single-channel label image: {path}", path=str(path))
    return np.ascontiguousarray(arr)


def write_png(path: str | Path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise DecodeError(f"write_png expects uint8, got {arr.dtype}", path=str(path))
    if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
        raise DecodeError(f"write_png expects H×W or H×W×3, got {arr.shape}", path=str(path))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path, format="PNG")
