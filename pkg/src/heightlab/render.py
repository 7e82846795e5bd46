"""Deterministic heightmap colouring and PNG output."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .heightgrid import HeightMap

# piecewise-linear map over [-2, +2] m; heights outside are clamped
STOPS = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
COLORS = np.array(
    [
        [49, 54, 149],
        [116, 173, 209],
        [255, 255, 191],
        [244, 109, 67],
        [165, 0, 38],
    ],
    dtype=np.float64,
)
NODATA_RGB = (128, 128, 128)
BAR_WIDTH = 12


def colorize(values: np.ndarray) -> np.ndarray:
    """Heights -> ``uint8`` RGB; NaN becomes gray."""
    v = np.asarray(values, dtype=np.float64)
    rgb = np.empty(v.shape + (3,), dtype=np.uint8)
    ok = np.isfinite(v)
    x = np.clip(v[ok], STOPS[0], STOPS[-1])
    for ch in range(3):
        rgb[..., ch][ok] = np.rint(np.interp(x, STOPS, COLORS[:, ch])).astype(np.uint8)
    rgb[~ok] = NODATA_RGB
    return rgb


def render_image(hm: HeightMap, scale: int = 2) -> np.ndarray:
    """Far rows at the top; a vertical +2 m (top) .. -2 m (bottom) colorbar on the right."""
    body = colorize(hm.values[::-1])
    body = np.repeat(np.repeat(body, scale, axis=0), scale, axis=1)
    H = body.shape[0]
    ramp = np.linspace(STOPS[-1], STOPS[0], H)[:, None].repeat(BAR_WIDTH, axis=1)
    sep = np.zeros((H, 2, 3), dtype=np.uint8)
    return np.concatenate([body, sep, colorize(ramp)], axis=1)


def save_png(path, hm: HeightMap, scale: int = 2) -> None:
    Image.fromarray(render_image(hm, scale), mode="RGB").save(path, format="PNG")
