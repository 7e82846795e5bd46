"""Ground-mask IoU loss, supervised height L1, and the weighted total."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .fusion import GroundMask
from .geometry import CameraModel, RoadFrame, pinhole, transform_points
from .heightgrid import HeightMap


@dataclass(frozen=True)
class LossWeights:
    lambda_sa: float = 5.0
    lambda_cons: float = 2.0
    lambda_h: float = 10.0

    def __post_init__(self):
        if min(self.lambda_sa, self.lambda_cons, self.lambda_h) < 0:
            raise ValueError("loss weights must be non-negative")


def confidence_pixels(h_conf: HeightMap, frame: RoadFrame, cam: CameraModel):
    """Pixel coordinates of the points ``(X, Y, H_conf)``; ``u, v, in_front``."""
    X, Y = h_conf.grid.centers()
    h = np.nan_to_num(h_conf.values, nan=0.0)
    pts = np.stack([X, Y, h], axis=-1)
    return pinhole(cam, transform_points(frame.camera_from_road(cam), pts))


def project_confidence_to_image(
    h_conf: HeightMap, frame: RoadFrame, cam: CameraModel, mass: Optional[np.ndarray] = None
) -> np.ndarray:
    """Soft image-space footprint of a confidence heightmap.

    Every data cell ``(X, Y, H_conf)`` is projected road -> ego -> camera ->
    pixel and its ``mass`` (default 1; normally ``max_a alpha_a``) is splatted
    bilinearly. The raster is clamped to ``[0, 1]``.
    """
    if mass is None:
        mass = np.ones(h_conf.grid.shape)
    u, v, in_front = confidence_pixels(h_conf, frame, cam)
    live = in_front & h_conf.valid
    raw = kernels.bilinear_splat(u[live], v[live], np.asarray(mass, dtype=np.float64)[live], (cam.height, cam.width))
    return np.minimum(raw, 1.0)


def soft_iou(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"raster shapes differ: {a.shape} vs {b.shape}")
    union = np.maximum(a, b).sum()
    if union <= 0:
        raise ValueError("IoU undefined: both rasters are empty")
    return float(np.minimum(a, b).sum() / union)


def iou_loss_sa(footprint: np.ndarray, m: GroundMask | np.ndarray, threshold: Optional[float] = None) -> float:
    """``1 - soft IoU`` between the projected footprint and the ground mask.

    With ``threshold`` set the footprint is binarized first (hard IoU).
    """
    mask = m.mask if isinstance(m, GroundMask) else np.asarray(m)
    f = np.asarray(footprint, dtype=np.float64)
    if threshold is not None:
        f = (f >= threshold).astype(np.float64)
    return 1.0 - soft_iou(f, mask)


def _joint(h_pred: HeightMap, h_gt: HeightMap) -> np.ndarray:
    if h_pred.grid.shape != h_gt.grid.shape:
        raise ValueError("heightmaps live on different grids")
    sel = h_pred.valid & h_gt.valid
    if not sel.any():
        raise ValueError("no jointly valid cell")
    return sel


def height_l1(h_pred: HeightMap, h_gt: HeightMap) -> float:
    sel = _joint(h_pred, h_gt)
    return float(np.abs(h_pred.values[sel] - h_gt.values[sel]).mean())


def total_loss(l_sa: float, l_cons: float, l_h: float, w: LossWeights = LossWeights()) -> float:
    return w.lambda_sa * l_sa + w.lambda_cons * l_cons + w.lambda_h * l_h
