"""Synthetic content and style images for demos and desk-scale experiments.

Content images are smooth random color fields; style images are strongly
textured patterns with distinct palettes, so their gram statistics are far
apart and a few hundred training iterations produce a visible pull toward
each style.
"""

from __future__ import annotations

import os

import numpy as np

from .images import resize_chw, save_image

__all__ = ["STYLE_KINDS", "content_image", "style_image", "write_toy_dataset"]

STYLE_KINDS = ("stripes_h", "checker", "stripes_diag", "dots", "waves",
               "rings", "grid", "noise_patches")


def content_image(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """A smooth random color field in [0, 1], shaped [3, size, size]."""
    coarse = rng.uniform(0.1, 0.9, size=(3, max(2, size // 8), max(2, size // 8))).astype(np.float32)
    img = resize_chw(coarse, size, size)
    # A soft diagonal ramp adds large-scale structure to reconstruct.
    ramp = np.linspace(0, 0.25, size, dtype=np.float32)
    img = img * 0.85 + (ramp[None, :, None] + ramp[None, None, :]) / 2.0
    return np.clip(img, 0.0, 1.0)


def _palette(kind: str) -> tuple[np.ndarray, np.ndarray]:
    palettes = {
        "stripes_h": ([0.9, 0.1, 0.1], [0.95, 0.9, 0.2]),
        "checker": ([0.1, 0.2, 0.8], [0.95, 0.95, 0.95]),
        "stripes_diag": ([0.1, 0.7, 0.2], [0.6, 0.1, 0.7]),
        "dots": ([0.95, 0.6, 0.1], [0.1, 0.1, 0.15]),
        "waves": ([0.1, 0.8, 0.8], [0.1, 0.15, 0.4]),
        "rings": ([0.85, 0.3, 0.5], [0.95, 0.9, 0.8]),
        "grid": ([0.2, 0.2, 0.2], [0.8, 0.85, 0.3]),
        "noise_patches": ([0.7, 0.4, 0.9], [0.2, 0.5, 0.3]),
    }
    a, b = palettes[kind]
    return np.array(a, dtype=np.float32), np.array(b, dtype=np.float32)


def style_image(kind: str, size: int = 64, seed: int = 0) -> np.ndarray:
    """A strongly textured [3, size, size] pattern for style ``kind``."""
    if kind not in STYLE_KINDS:
        raise ValueError(f"unknown style kind {kind!r}; choose from {STYLE_KINDS}")
    ca, cb = _palette(kind)
    y, x = np.mgrid[0:size, 0:size].astype(np.float32)
    period = max(4, size // 8)
    if kind == "stripes_h":
        mask = ((y // (period // 2)) % 2).astype(np.float32)
    elif kind == "checker":
        mask = (((y // period) + (x // period)) % 2).astype(np.float32)
    elif kind == "stripes_diag":
        mask = (((x + y) // (period // 2)) % 2).astype(np.float32)
    elif kind == "dots":
        cy = (y % period) - period / 2
        cx = (x % period) - period / 2
        mask = (cy * cy + cx * cx < (period / 3.0) ** 2).astype(np.float32)
    elif kind == "waves":
        mask = 0.5 + 0.5 * np.sin(2 * np.pi * (y / period + np.sin(2 * np.pi * x / (2 * period))))
    elif kind == "rings":
        r = np.sqrt((y - size / 2) ** 2 + (x - size / 2) ** 2)
        mask = ((r // (period // 2)) % 2).astype(np.float32)
    elif kind == "grid":
        mask = (((y % period) < 2) | ((x % period) < 2)).astype(np.float32)
    else:  # noise_patches
        rng = np.random.default_rng(seed)
        coarse = rng.uniform(size=(max(2, size // 4), max(2, size // 4))) > 0.5
        mask = resize_chw(np.repeat(coarse[None].astype(np.float32), 3, axis=0), size, size)[0]
        mask = (mask > 0.5).astype(np.float32)
    img = ca[:, None, None] * mask[None] + cb[:, None, None] * (1.0 - mask[None])
    return np.clip(img.astype(np.float32), 0.0, 1.0)


def write_toy_dataset(root: str, n_content: int = 5, styles=STYLE_KINDS[:2],
                      size: int = 64, seed: int = 0) -> tuple[str, str]:
    """Write PNG content/style directories under ``root``; returns their paths."""
    content_dir = os.path.join(root, "content")
    style_dir = os.path.join(root, "styles")
    os.makedirs(content_dir, exist_ok=True)
    os.makedirs(style_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n_content):
        save_image(content_image(rng, size), os.path.join(content_dir, f"content_{i:02d}.png"))
    for kind in styles:
        save_image(style_image(kind, size, seed=seed), os.path.join(style_dir, f"{kind}.png"))
    return content_dir, style_dir
