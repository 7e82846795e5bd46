"""BEV grid, the HeightMap container, and slope anchors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .geometry import RoadFrame

HEIGHT_SANITY = 50.0

DEFAULT_SLOPES = (-0.087, -0.044, 0.0, 0.044, 0.087)


@dataclass(frozen=True)
class BevGrid:
    """Row ``r`` runs longitudinally (y), column ``c`` laterally (x)."""

    rows: int = 200
    cols: int = 48
    meters_per_pixel: float = 0.5
    x_min: float = -12.0
    y_min: float = 0.0

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("grid must have at least one row and column")
        if not self.meters_per_pixel > 0:
            raise ValueError("meters_per_pixel must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def mpp(self) -> float:
        return self.meters_per_pixel

    @property
    def x_max(self) -> float:
        return self.x_min + self.cols * self.meters_per_pixel

    @property
    def y_max(self) -> float:
        return self.y_min + self.rows * self.meters_per_pixel

    def cell_center(self, r, c):
        m = self.meters_per_pixel
        return self.x_min + (np.asarray(c) + 0.5) * m, self.y_min + (np.asarray(r) + 0.5) * m

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """``(X, Y)`` arrays of shape ``(rows, cols)``."""
        r, c = np.meshgrid(np.arange(self.rows), np.arange(self.cols), indexing="ij")
        return self.cell_center(r, c)

    def to_cell(self, x, y):
        """Road-plane meters to continuous ``(col, row)``; centers land on integers."""
        m = self.meters_per_pixel
        return (np.asarray(x) - self.x_min) / m - 0.5, (np.asarray(y) - self.y_min) / m - 0.5

    def contains(self, x, y) -> np.ndarray:
        x, y = np.asarray(x), np.asarray(y)
        return (x >= self.x_min) & (x < self.x_max) & (y >= self.y_min) & (y < self.y_max)


@dataclass(frozen=True)
class HeightMap:
    """Heights in meters on a BevGrid; ``NaN`` marks no-data cells."""

    grid: BevGrid
    values: np.ndarray
    frame: Optional[RoadFrame] = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        vals[~np.isfinite(vals)] = np.nan
        if np.nanmax(np.abs(vals), initial=0.0) > HEIGHT_SANITY:
            raise ValueError(f"heights exceed the ±{HEIGHT_SANITY} m sanity bound")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.values)

    @classmethod
    def nodata(cls, grid: BevGrid, frame: Optional[RoadFrame] = None) -> HeightMap:
        return cls(grid, np.full(grid.shape, np.nan), frame)

    def with_values(self, values: np.ndarray) -> HeightMap:
        return HeightMap(self.grid, values, self.frame)


@dataclass(frozen=True)
class SlopeAnchorSet:
    grid: BevGrid
    slopes: tuple
    anchors: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.slopes)


def make_anchor_set(grid: BevGrid, slopes: Sequence[float] = DEFAULT_SLOPES) -> SlopeAnchorSet:
    """Planar height hypotheses ``Z_a = slope_a * y`` through the road origin."""
    slopes = tuple(float(s) for s in slopes)
    if not slopes:
        raise ValueError("need at least one slope")
    if any(b <= a for a, b in zip(slopes, slopes[1:])):
        raise ValueError("slopes must be strictly increasing")
    _, Y = grid.centers()
    anchors = np.stack([s * Y for s in slopes])
    anchors.setflags(write=False)
    return SlopeAnchorSet(grid, slopes, anchors)


def slopes_from_degrees(degrees: Sequence[float]) -> list[float]:
    return [math.tan(math.radians(d)) for d in degrees]


def rasterize_surface(
    grid: BevGrid, surface: Callable[[np.ndarray, np.ndarray], np.ndarray], frame: Optional[RoadFrame] = None
) -> HeightMap:
    """Evaluate a vectorized ``h(x, y)`` at every cell center."""
    X, Y = grid.centers()
    vals = np.broadcast_to(np.asarray(surface(X, Y), dtype=np.float64), grid.shape)
    return HeightMap(grid, vals, frame)


def sample_bilinear(field, u, v):
    """Bilinear sample of a 2-D ``(H, W)`` or ``(H, W, C)`` raster.

    ``u`` is the continuous column, ``v`` the continuous row; both may be
    scalars or arrays. Returns ``(value, valid)``. Outside
    ``[0, W-1] x [0, H-1]`` the value is zero and ``valid`` is False.
    """
    arr = np.asarray(field, dtype=np.float64)
    scalar_field = arr.ndim == 2
    if scalar_field:
        arr = arr[..., None]
    u_arr, v_arr = np.broadcast_arrays(np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64))
    out, valid = kernels.bilinear_gather(arr, u_arr, v_arr)
    shape = u_arr.shape
    out = out.reshape(shape + (arr.shape[2],))
    valid = valid.reshape(shape)
    if scalar_field:
        out = out[..., 0]
    if not shape:
        return (out[()] if scalar_field else out), bool(valid)
    return out, valid
