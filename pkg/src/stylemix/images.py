"""PNG in/out and resize helpers shared by the trainer, CLI, and service.

Images travel as [3, H, W] float32 arrays in [0, 1].  Decoding maps 8-bit
values through /255; resizing happens in 8-bit space with PIL's bilinear
filter, which keeps the whole pipeline deterministic.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

__all__ = [
    "ImageError",
    "load_image",
    "save_image",
    "encode_png",
    "decode_png",
    "resize_chw",
    "fit_to_square",
]


class ImageError(ValueError):
    """An image file or byte stream could not be decoded."""


def _pil_to_chw(img: Image.Image) -> np.ndarray:
    rgb = img.convert("RGB")
    arr = np.asarray(rgb, dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def _chw_to_pil(arr: np.ndarray) -> Image.Image:
    clipped = np.clip(arr, 0.0, 1.0)
    hwc = (clipped.transpose(1, 2, 0) * 255.0).round().astype(np.uint8)
    return Image.fromarray(hwc, mode="RGB")


def load_image(path: str) -> np.ndarray:
    """Decode an image file to [3, H, W] floats in [0, 1]."""
    try:
        with Image.open(path) as img:
            return _pil_to_chw(img)
    except FileNotFoundError:
        raise ImageError(f"image file not found: {path}") from None
    except Exception as e:
        raise ImageError(f"cannot decode image {path}: {e}") from e


def save_image(arr: np.ndarray, path: str) -> None:
    """Write a [3, H, W] float array as 8-bit RGB PNG, clamping to [0, 1]."""
    _chw_to_pil(arr).save(path, format="PNG")


def encode_png(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    _chw_to_pil(arr).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as img:
            return _pil_to_chw(img)
    except Exception as e:
        raise ImageError(f"cannot decode image bytes: {e}") from e


def resize_chw(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of a [3, H, W] float array (via 8-bit space)."""
    pil = _chw_to_pil(arr).resize((width, height), Image.BILINEAR)
    return _pil_to_chw(pil)


def fit_to_square(arr: np.ndarray, size: int) -> np.ndarray:
    """Scale the short side to ``size`` and center-crop the long side."""
    _, h, w = arr.shape
    scale = size / min(h, w)
    nh = max(size, int(round(h * scale)))
    nw = max(size, int(round(w * scale)))
    resized = resize_chw(arr, nh, nw)
    top = (nh - size) // 2
    left = (nw - size) // 2
    return np.ascontiguousarray(resized[:, top:top + size, left:left + size])
