"""Ego-motion compensated heightmap warping and the temporal L1 loss."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateGeometryError
from .geometry import RigidTransform, RoadFrame, compose, invert
from .heightgrid import BevGrid, HeightMap

MAX_TILT = math.radians(45.0)


def relative_transform(frame_prev: RoadFrame, frame_curr: RoadFrame, ego_motion: RigidTransform) -> RigidTransform:
    """road(t-1) -> road(t): ``T_ego->road(t) · T_ego(t-1)->ego(t) · T_road->ego(t-1)``.

    ``ego_motion`` maps points expressed in ego(t-1) into ego(t).
    """
    return compose(frame_curr.pose, compose(ego_motion, invert(frame_prev.pose)))


@dataclass(frozen=True)
class WarpPlan:
    """Height-independent part of a warp: where each target cell reads from.

    The warped height is ``gain * sample(h_prev, src_col, src_row) + offset``.
    """

    src_col: np.ndarray
    src_row: np.ndarray
    gain: float
    offset: np.ndarray
    target_grid: BevGrid


def plan_warp(t_rel: RigidTransform, source_grid: BevGrid, target_grid: BevGrid) -> WarpPlan:
    R = t_rel.rotation
    if R[2, 2] < math.cos(MAX_TILT):
        raise DegenerateGeometryError("relative transform tilts the road plane by 45 degrees or more")
    X, Y = target_grid.centers()
    pts = np.stack([X, Y, np.zeros_like(X)], axis=-1)
    src = (pts - t_rel.translation) @ R  # R^T (p - t) for row vectors
    xs, ys = src[..., 0], src[..., 1]
    col, row = source_grid.to_cell(xs, ys)
    offset = R[2, 0] * xs + R[2, 1] * ys + t_rel.translation[2]
    return WarpPlan(col, row, float(R[2, 2]), offset, target_grid)


@dataclass(frozen=True)
class OverlapMask:
    mask: np.ndarray

    @property
    def empty(self) -> bool:
        return not bool(self.mask.any())


def apply_warp(plan: WarpPlan, values: np.ndarray):
    """Warp raw height values with a precomputed plan -> ``(warped, mask)``."""
    sampled, ok = kernels.bilinear_gather(np.asarray(values, dtype=np.float64)[..., None], plan.src_col, plan.src_row)
    shape = plan.target_grid.shape
    ok = ok.reshape(shape)
    warped = np.where(ok, plan.gain * sampled[:, 0].reshape(shape) + plan.offset, np.nan)
    return warped, ok


def warp_heightmap(h_prev: HeightMap, t_rel: RigidTransform, target_grid: BevGrid | None = None):
    """Re-express ``h_prev`` (road t-1) on ``target_grid`` (road t) by inverse gather.

    Each target cell center is pulled back through ``t_rel`` within the plane,
    ``h_prev`` is sampled bilinearly there, and the sampled point is pushed
    forward to obtain its height in the new frame. Returns
    ``(HeightMap, OverlapMask)``; cells whose source is off-grid or no-data are
    no-data and cleared in the mask.
    """
    target_grid = target_grid or h_prev.grid
    plan = plan_warp(t_rel, h_prev.grid, target_grid)
    warped, ok = apply_warp(plan, h_prev.values)
    return HeightMap(target_grid, warped), OverlapMask(ok)


def consistency_loss(h_warped: HeightMap, h_curr: HeightMap, m: OverlapMask) -> float:
    """Mean absolute height difference over the overlap; 0.0 when it is empty."""
    if h_warped.grid.shape != h_curr.grid.shape or m.mask.shape != h_curr.grid.shape:
        raise ValueError("shape mismatch")
    sel = m.mask & h_warped.valid & h_curr.valid
    n = int(sel.sum())
    if n == 0:
        return 0.0
    return float(np.abs(h_warped.values[sel] - h_curr.values[sel]).sum() / n)
