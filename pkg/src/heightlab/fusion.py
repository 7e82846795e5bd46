"""Slope-aware adaptive feature fusion.

Each slope anchor is projected into the image and samples the image features;
a per-cell softmax over anchors blends the sampled features and yields a
confidence-weighted height estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import CameraModel, RoadFrame, pinhole, transform_points
from .heightgrid import BevGrid, HeightMap, SlopeAnchorSet


@dataclass(frozen=True)
class FeatureGrid:
    """``(H, W, C)`` raster of feature activations."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim == 2:
            v = v[..., None]
        if v.ndim != 3 or v.shape[2] < 1:
            raise ValueError("feature grid must be H x W x C with C >= 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[:2]


@dataclass(frozen=True)
class WeightField:
    """Per-cell anchor probabilities, shape ``(A, rows, cols)``.

    ``dead`` marks cells where no anchor had a valid projection; their weights
    are uniform and downstream heights there are no-data.
    """

    weights: np.ndarray
    grid: BevGrid
    dead: np.ndarray

    @property
    def num_anchors(self) -> int:
        return self.weights.shape[0]

    def confidence(self) -> np.ndarray:
        """Per-cell confidence mass ``max_a alpha_a``."""
        return self.weights.max(axis=0)


@dataclass(frozen=True)
class GroundMask:
    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2:
            raise ValueError("ground mask must be 2-D")
        if not np.all((m == 0) | (m == 1)):
            raise ValueError("ground mask values must be 0 or 1")
        m = m.astype(np.uint8)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @property
    def shape(self):
        return self.mask.shape


def anchor_pixels(anchors: SlopeAnchorSet, frame: RoadFrame, cam: CameraModel):
    """Pixel coordinates of every anchor point.

    Returns ``u, v, in_front`` each of shape ``(A, rows, cols)``.
    """
    X, Y = anchors.grid.centers()
    pts = np.stack(np.broadcast_arrays(X[None], Y[None], anchors.anchors), axis=-1)
    p_cam = transform_points(frame.camera_from_road(cam), pts)
    return pinhole(cam, p_cam)


def project_and_sample(anchors: SlopeAnchorSet, frame: RoadFrame, cam: CameraModel, img_feat: FeatureGrid):
    """Sample image features at each anchor's projection.

    Returns ``(sampled, valid)`` with ``sampled`` of shape
    ``(A, rows, cols, C)`` and ``valid`` of shape ``(A, rows, cols)``. Invalid
    projections (behind the camera or off-image) carry zero features.
    """
    if img_feat.shape != (cam.height, cam.width):
        raise ValueError(f"feature raster {img_feat.shape} does not match camera {(cam.height, cam.width)}")
    u, v, in_front = anchor_pixels(anchors, frame, cam)
    u = np.where(in_front, u, -1.0)
    vals, ok = kernels.bilinear_gather(img_feat.values, u, v)
    A, R, Cc = u.shape
    sampled = vals.reshape(A, R, Cc, img_feat.channels)
    valid = ok.reshape(A, R, Cc)
    return sampled, valid


def softmax_weights(logits: np.ndarray, valid: np.ndarray | None = None, grid: BevGrid | None = None) -> WeightField:
    """Softmax over the anchor axis (axis 0).

    Anchors flagged invalid get zero weight. Cells with no valid anchor fall
    back to uniform weights and are flagged ``dead``.
    """
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    if valid is None:
        valid = np.ones(z.shape, dtype=bool)
    valid = np.asarray(valid, dtype=bool)
    dead = ~valid.any(axis=0)
    live = valid | dead[None]
    zm = np.where(live, z, -np.inf)
    zmax = zm.max(axis=0, keepdims=True)
    e = np.where(live, np.exp(zm - zmax), 0.0)
    e[:, dead] = 1.0
    w = e / e.sum(axis=0, keepdims=True)
    if grid is None:
        grid = BevGrid(rows=z.shape[1], cols=z.shape[2]) if z.ndim == 3 else None
    return WeightField(w, grid, dead)


def fuse_features(sampled: np.ndarray, w: WeightField) -> np.ndarray:
    """``F_SA = sum_a alpha_a * F_a`` per cell and channel -> ``(rows, cols, C)``."""
    s = np.asarray(sampled, dtype=np.float64)
    if s.shape[:3] != w.weights.shape:
        raise ValueError(f"sampled features {s.shape[:3]} do not match weights {w.weights.shape}")
    return np.einsum("arc,arck->rck", w.weights, s)


def confidence_heightmap(anchors: SlopeAnchorSet, w: WeightField, frame: RoadFrame | None = None) -> HeightMap:
    """Expected anchor height per cell; dead cells are no-data."""
    if anchors.anchors.shape != w.weights.shape:
        raise ValueError("anchor and weight shapes differ")
    h = np.einsum("arc,arc->rc", w.weights, anchors.anchors)
    h = np.where(w.dead, np.nan, h)
    return HeightMap(anchors.grid, h, frame)
