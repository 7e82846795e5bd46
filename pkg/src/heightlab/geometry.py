"""Rigid transforms, frames and the pinhole camera.

Conventions
-----------
* ``T_dst_src`` style: a transform maps points *from* its source frame *into*
  its destination frame, ``p_dst = R @ p_src + t``.
* ``compose(a, b)`` applies ``b`` first, then ``a`` (matrix product ``a @ b``).
* Road and ego frames: x right, y forward, z up.
* Camera frame: x right, y down, z forward (optical axis).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError

EPS_DEPTH = 1e-6
_ORTHO_TOL = 1e-6
_REORTHO_DRIFT = 1e-7


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest proper rotation to ``R`` (SVD projection)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=np.float64))
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("transform entries must be finite")
        if np.abs(R.T @ R - np.eye(3)).max() > _ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", _frozen(R))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, M: np.ndarray, reorthonormalize: bool = False) -> RigidTransform:
        """Build from a 3x4 ``[R|t]`` or 4x4 homogeneous matrix."""
        M = np.asarray(M, dtype=np.float64)
        if M.shape not in ((3, 4), (4, 4)):
            raise ValueError(f"expected 3x4 or 4x4 matrix, got {M.shape}")
        R = M[:3, :3]
        if reorthonormalize and np.abs(R.T @ R - np.eye(3)).max() > _REORTHO_DRIFT:
            R = orthonormalize(R)
        return cls(R, M[:3, 3])

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        return compose(self, other)

    def apply(self, pts) -> np.ndarray:
        return transform_points(self, pts)

    def inverse(self) -> RigidTransform:
        return invert(self)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """``a ∘ b``: apply ``b`` first, then ``a``."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    Rt = t.rotation.T
    return RigidTransform(Rt, -(Rt @ t.translation))


def transform_points(t: RigidTransform, pts) -> np.ndarray:
    """Apply ``t`` to an ``(..., 3)`` array of points."""
    p = np.asarray(pts, dtype=np.float64)
    return p @ t.rotation.T + t.translation


def translate(x: float = 0.0, y: float = 0.0, z: float = 0.0) -> RigidTransform:
    return RigidTransform(np.eye(3), [x, y, z])


def rot_x(angle: float) -> RigidTransform:
    c, s = math.cos(angle), math.sin(angle)
    return RigidTransform([[1, 0, 0], [0, c, -s], [0, s, c]], np.zeros(3))


def rot_y(angle: float) -> RigidTransform:
    c, s = math.cos(angle), math.sin(angle)
    return RigidTransform([[c, 0, s], [0, 1, 0], [-s, 0, c]], np.zeros(3))


def rot_z(angle: float) -> RigidTransform:
    c, s = math.cos(angle), math.sin(angle)
    return RigidTransform([[c, -s, 0], [s, c, 0], [0, 0, 1]], np.zeros(3))


def camera_rotation_from_ego(pitch: float) -> np.ndarray:
    """Rotation camera<-ego for a forward camera pitched *down* by ``pitch``.

    Rows are the camera axes expressed in ego coordinates.
    """
    c, s = math.cos(pitch), math.sin(pitch)
    return np.array([[1.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def mounted(
        cls,
        fx: float,
        fy: float,
        cx: float,
        cy: float,
        width: int,
        height: int,
        mount_height: float,
        pitch: float,
        axle_to_camera: float = 0.0,
    ) -> CameraModel:
        """Camera at ``(0, axle_to_camera, mount_height)`` in ego, pitched down."""
        R = camera_rotation_from_ego(pitch)
        center = np.array([0.0, axle_to_camera, mount_height])
        return cls(fx, fy, cx, cy, width, height, RigidTransform(R, -R @ center))

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def center_in_ego(self) -> np.ndarray:
        return invert(self.extrinsic).translation.copy()

    def pixel_rays(self) -> np.ndarray:
        """``(height, width, 3)`` camera-frame ray directions with unit z."""
        u = np.arange(self.width, dtype=np.float64)
        v = np.arange(self.height, dtype=np.float64)
        uu, vv = np.meshgrid(u, v)
        return np.stack([(uu - self.cx) / self.fx, (vv - self.cy) / self.fy, np.ones_like(uu)], axis=-1)


@dataclass(frozen=True)
class RoadFrame:
    """Road frame of one timestamp; ``pose`` maps ego points into road."""

    pose: RigidTransform
    timestamp: int = 0

    def __post_init__(self):
        # road z expressed in ego must point up (ego z is up)
        if self.pose.rotation[2, 2] <= 0:
            raise ValueError("road frame z-axis must point upward")

    @property
    def road_to_ego(self) -> RigidTransform:
        return invert(self.pose)

    def camera_from_road(self, cam: CameraModel) -> RigidTransform:
        return compose(cam.extrinsic, invert(self.pose))


def pinhole(cam: CameraModel, pts_cam: np.ndarray):
    """Project camera-frame points. Returns ``u, v, in_front``."""
    p = np.asarray(pts_cam, dtype=np.float64)
    z = p[..., 2]
    in_front = z > EPS_DEPTH
    zs = np.where(in_front, z, 1.0)
    u = cam.fx * p[..., 0] / zs + cam.cx
    v = cam.fy * p[..., 1] / zs + cam.cy
    return u, v, in_front


def in_image(cam: CameraModel, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return (u >= 0) & (u <= cam.width - 1) & (v >= 0) & (v <= cam.height - 1)


def project(cam: CameraModel, pts_ego) -> np.ndarray:
    """Project ego-frame points to pixels.

    Returns an ``(N, 3)`` array of ``(u, v, valid)``; ``valid`` is 0.0 for points
    behind the camera or outside ``[0, width-1] x [0, height-1]``.
    """
    p = np.atleast_2d(np.asarray(pts_ego, dtype=np.float64))
    u, v, ok = pinhole(cam, transform_points(cam.extrinsic, p))
    ok = ok & in_image(cam, u, v)
    return np.stack([u, v, ok.astype(np.float64)], axis=-1)


def backproject(cam: CameraModel, u, v, depth) -> np.ndarray:
    """Pixel + z-depth to camera-frame points."""
    u, v, depth = (np.asarray(a, dtype=np.float64) for a in (u, v, depth))
    return np.stack([(u - cam.cx) / cam.fx * depth, (v - cam.cy) / cam.fy * depth, depth], axis=-1)


def road_frame_from_plane(
    cam: CameraModel, normal_cam: np.ndarray, camera_height: float, timestamp: int = 0
) -> RoadFrame:
    """Road frame for a plane given by its up-normal (camera coords) and camera height.

    Origin: camera center dropped onto the plane. z: plane normal. y: viewing
    direction projected into the plane (Gram-Schmidt). x: ``y × z``.
    """
    if not camera_height > 0:
        raise ValueError("camera_height must be positive")
    n = np.asarray(normal_cam, dtype=np.float64)
    n = n / np.linalg.norm(n)
    view = np.array([0.0, 0.0, 1.0])
    y = view - (view @ n) * n
    ny = np.linalg.norm(y)
    if ny < 1e-9:
        raise DegenerateGeometryError("viewing direction is parallel to the plane normal")
    y /= ny
    x = np.cross(y, n)
    # rows: road axes in camera coords -> rotation road<-camera
    R_rc = np.stack([x, y, n])
    origin_cam = -camera_height * n
    road_from_cam = RigidTransform(R_rc, -R_rc @ origin_cam)
    return RoadFrame(compose(road_from_cam, cam.extrinsic), timestamp)


def road_frame_from_camera(
    cam: CameraModel, camera_height: float, camera_pitch: float, timestamp: int = 0
) -> RoadFrame:
    """Road frame for a camera ``camera_height`` above the plane, pitched down by ``camera_pitch``.

    Pitch is measured relative to the road plane; the camera has no roll.
    """
    c, s = math.cos(camera_pitch), math.sin(camera_pitch)
    normal_cam = np.array([0.0, -c, -s])
    return road_frame_from_plane(cam, normal_cam, camera_height, timestamp)
