"""Procedural road scenes: surfaces, trajectories, masks, depth and features.

World frame: x right, y forward, z up. The vehicle drives along a planar
path over a height field ``h(x, y)``. Ego and road frames stay gravity-level
(yaw only): the ego origin sits on the surface under the rear axle; the road
origin sits on the surface directly under the camera center. Heights in a
road frame are therefore the surface relief relative to the point beneath
the camera, which keeps a constant-grade world an exact anchor plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .fusion import FeatureGrid, GroundMask
from .geometry import (
    CameraModel,
    RigidTransform,
    RoadFrame,
    backproject,
    compose,
    invert,
    rot_z,
    transform_points,
    translate,
)
from .heightgrid import DEFAULT_SLOPES, BevGrid, HeightMap, rasterize_surface

SURFACE_KINDS = ("flat", "grade", "crest", "bank", "composite")
MAX_GRADE = 0.15
MAX_AMPLITUDE = 2.0
MAX_SLOPE = 0.2
GRADE_NORM = MAX_GRADE

MARCH_STEP = 0.25
BISECT_TOL = 1e-4
FAR_PLANE = 200.0


@dataclass(frozen=True)
class SceneSpec:
    surface_kind: str = "flat"
    params: dict = field(default_factory=dict)
    seed: int = 0
    length: int = 1
    ego_speed: float = 10.0
    frame_dt: float = 0.1
    yaw_rate: float = 0.0

    def __post_init__(self):
        if self.surface_kind not in SURFACE_KINDS:
            raise ValueError(f"unknown surface kind {self.surface_kind!r}")
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if self.ego_speed < 0 or self.frame_dt <= 0:
            raise ValueError("ego_speed must be >= 0 and frame_dt > 0")

    @classmethod
    def from_dict(cls, d: dict) -> SceneSpec:
        known = {k: d[k] for k in ("surface_kind", "params", "seed", "length", "ego_speed", "frame_dt", "yaw_rate") if k in d}
        return cls(**known)

    def to_dict(self) -> dict:
        return {
            "surface_kind": self.surface_kind,
            "params": dict(self.params),
            "seed": self.seed,
            "length": self.length,
            "ego_speed": self.ego_speed,
            "frame_dt": self.frame_dt,
            "yaw_rate": self.yaw_rate,
        }


@dataclass(frozen=True)
class RigConfig:
    """Camera, mounting and raster settings shared by a scene."""

    width: int = 160
    height: int = 96
    fx: float = 120.0
    fy: float = 120.0
    cx: float = 79.5
    cy: float = 47.5
    mount_height: float = 1.5
    pitch_deg: float = 3.0
    axle_to_camera: float = 1.5
    rows: int = 200
    cols: int = 48
    meters_per_pixel: float = 0.5
    x_min: float = -12.0
    y_min: float = 0.0
    channels: int = 8
    noise_cell: int = 16
    noise_amplitude: float = 0.5
    slopes: tuple = DEFAULT_SLOPES

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> RigConfig:
        d = dict(d or {})
        if "slopes" in d:
            d["slopes"] = tuple(d["slopes"])
        return cls(**d)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["slopes"] = list(self.slopes)
        return out

    def camera(self) -> CameraModel:
        return CameraModel.mounted(
            self.fx, self.fy, self.cx, self.cy, self.width, self.height,
            self.mount_height, math.radians(self.pitch_deg), self.axle_to_camera,
        )

    def grid(self) -> BevGrid:
        return BevGrid(self.rows, self.cols, self.meters_per_pixel, self.x_min, self.y_min)


@dataclass(frozen=True)
class Surface:
    """``h = grade*y + amplitude*sin(2*pi*y/wavelength + phase) + bank*x``.

    ``yaw`` and ``origin`` place the evaluation frame in the world: local
    ``(x, y)`` maps to ``rot(yaw) (x, y) + origin[:2]`` and heights are
    reported relative to ``origin[2]``.
    """

    grade: float = 0.0
    amplitude: float = 0.0
    wavelength: float = 80.0
    phase: float = 0.0
    bank: float = 0.0
    yaw: float = 0.0
    origin: tuple = (0.0, 0.0, 0.0)

    def _world_xy(self, x, y):
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
        return c * x - s * y + self.origin[0], s * x + c * y + self.origin[1]

    def world_height(self, xw, yw):
        k = 2 * math.pi / self.wavelength
        return self.grade * yw + self.amplitude * np.sin(k * yw + self.phase) + self.bank * xw

    def world_gradient(self, xw, yw):
        k = 2 * math.pi / self.wavelength
        gy = self.grade + self.amplitude * k * np.cos(k * np.asarray(yw) + self.phase)
        gx = np.full_like(np.asarray(gy, dtype=np.float64), self.bank)
        return gx, gy

    def __call__(self, x, y):
        xw, yw = self._world_xy(x, y)
        return self.world_height(xw, yw) - self.origin[2]

    def gradient(self, x, y):
        """Exact ``(dh/dx, dh/dy)`` in the local frame."""
        xw, yw = self._world_xy(x, y)
        gx, gy = self.world_gradient(xw, yw)
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return c * gx + s * gy, -s * gx + c * gy

    @property
    def max_slope(self) -> float:
        """Upper bound on ``|grad h|`` (attained for most parameter sets)."""
        along = abs(self.grade) + abs(self.amplitude) * 2 * math.pi / self.wavelength
        return math.hypot(along, self.bank)

    def placed(self, yaw: float, origin) -> Surface:
        return replace(self, yaw=float(yaw), origin=tuple(float(o) for o in origin))


def gen_surface(spec: SceneSpec) -> Surface:
    """Continuous height field for ``spec``; deterministic given the seed."""
    p = dict(spec.params)
    kind = spec.surface_kind
    allowed = {
        "flat": set(),
        "grade": {"grade"},
        "crest": {"amplitude", "wavelength", "phase"},
        "bank": {"bank"},
        "composite": {"grade", "amplitude", "wavelength", "phase", "bank"},
    }[kind]
    extra = set(p) - allowed
    if extra:
        raise ValueError(f"parameters {sorted(extra)} not valid for surface kind {kind!r}")
    if kind == "composite" and "phase" not in p:
        p["phase"] = float(np.random.default_rng(spec.seed).uniform(0.0, 2 * math.pi))
    s = Surface(**{k: float(v) for k, v in p.items()})
    if abs(s.grade) > MAX_GRADE or abs(s.bank) > MAX_GRADE:
        raise ValueError(f"|grade| and |bank| must be <= {MAX_GRADE}")
    if not 0 <= s.amplitude <= MAX_AMPLITUDE:
        raise ValueError(f"amplitude must be in [0, {MAX_AMPLITUDE}] m")
    if not s.wavelength > 0:
        raise ValueError("wavelength must be positive")
    if s.max_slope > MAX_SLOPE + 1e-12:
        raise ValueError(f"surface slope bound {s.max_slope:.3f} exceeds {MAX_SLOPE}")
    return s


@dataclass(frozen=True)
class Trajectory:
    frames: list
    ego_motions: list  # ego_motions[t] maps ego(t-1) -> ego(t); entry 0 is identity
    world_from_ego: list
    surfaces: list  # surface expressed in each road frame

    def __len__(self):
        return len(self.frames)


def gen_trajectory(spec: SceneSpec, surface: Surface, rig: RigConfig = RigConfig()) -> Trajectory:
    """Drive ``spec.length`` frames at ``ego_speed`` (horizontal) with constant yaw rate."""
    cam = rig.camera()
    cam_in_ego = cam.center_in_ego()
    step = spec.ego_speed * spec.frame_dt
    px = py = 0.0
    psi = 0.0
    frames, motions, w_ego, surfs = [], [], [], []
    for t in range(spec.length):
        if t > 0:
            px += -math.sin(psi) * step
            py += math.cos(psi) * step
            psi += spec.yaw_rate * spec.frame_dt
        z = float(surface.world_height(px, py))
        world_ego = compose(translate(px, py, z), rot_z(psi))
        cw = transform_points(world_ego, cam_in_ego)
        o = (float(cw[0]), float(cw[1]), float(surface.world_height(cw[0], cw[1])))
        world_road = compose(translate(*o), rot_z(psi))
        frames.append(RoadFrame(compose(invert(world_road), world_ego), t))
        motions.append(RigidTransform.identity() if t == 0 else compose(invert(world_ego), w_ego[-1]))
        w_ego.append(world_ego)
        surfs.append(surface.placed(psi, o))
    return Trajectory(frames, motions, w_ego, surfs)


@dataclass(frozen=True)
class View:
    """Per-pixel ray-cast result in road coordinates."""

    hit: np.ndarray
    depth: np.ndarray  # camera z-depth, NaN where no hit
    points: np.ndarray  # (H, W, 3) road-frame intersection points
    mask: np.ndarray  # hit within the BEV grid extent


def cast_rays(surface: Surface, frame: RoadFrame, cam: CameraModel, grid: BevGrid, far: float = FAR_PLANE) -> View:
    """Ray-march every pixel against ``surface`` (given in road coordinates).

    Steps of at least 0.25 m (longer when the height gap and the slope bound
    prove no crossing is skipped) locate a sign change of
    ``z_ray - h(x_ray, y_ray)``; bisection narrows it to 1e-4 m and a final secant step makes planar
    surfaces exact to rounding.
    """
    road_cam = compose(frame.pose, invert(cam.extrinsic))
    d = cam.pixel_rays().reshape(-1, 3) @ road_cam.rotation.T
    o = road_cam.translation
    dn = np.linalg.norm(d, axis=1)
    dtau = MARCH_STEP / dn
    tau_max = far / dn

    def gap(tau, idx):
        p = o + tau[:, None] * d[idx]
        return p[:, 2] - surface(p[:, 0], p[:, 1])

    n = d.shape[0]
    # |d/dtau (z - h)| <= lip; steps of gap/lip can never skip a crossing
    slope = surface.max_slope
    dxy = np.hypot(d[:, 0], d[:, 1])
    lip = np.abs(d[:, 2]) + slope * dxy
    escaping = d[:, 2] > slope * dxy
    lo = np.zeros(n)
    hi = np.full(n, np.nan)
    tau = np.zeros(n)
    f_tau = gap(tau, np.arange(n))
    active = np.flatnonzero((f_tau > 0) & ~escaping)
    while active.size:
        step = np.maximum(f_tau[active] / lip[active], dtau[active])
        t_next = tau[active] + step
        g = gap(t_next, active)
        crossed = g <= 0
        done = active[crossed]
        hi[done] = t_next[crossed]
        lo[done] = tau[done]
        tau[active] = t_next
        f_tau[active] = g
        keep = ~crossed & (t_next < tau_max[active])
        active = active[keep]
    hit = np.isfinite(hi)
    idx = np.flatnonzero(hit)
    a, b = lo[idx], hi[idx]
    while idx.size and np.max((b - a) * dn[idx]) > BISECT_TOL:
        mid = 0.5 * (a + b)
        above = gap(mid, idx) > 0
        a = np.where(above, mid, a)
        b = np.where(above, b, mid)
    if idx.size:
        fa, fb = gap(a, idx), gap(b, idx)
        denom = fa - fb
        safe = denom > 0
        root = np.where(safe, a + fa / np.where(safe, denom, 1.0) * (b - a), 0.5 * (a + b))
    else:
        root = a
    depth = np.full(n, np.nan)
    depth[idx] = root
    pts = np.full((n, 3), np.nan)
    pts[idx] = o + root[:, None] * d[idx]
    H, W = cam.height, cam.width
    inside = np.zeros(n, dtype=bool)
    inside[idx] = grid.contains(pts[idx, 0], pts[idx, 1])
    return View(hit.reshape(H, W), depth.reshape(H, W), pts.reshape(H, W, 3), inside.reshape(H, W))


def render_ground_mask(surface: Surface, frame: RoadFrame, cam: CameraModel, grid: BevGrid) -> GroundMask:
    return GroundMask(cast_rays(surface, frame, cam, grid).mask.astype(np.uint8))


def value_noise(shape, seed: int, frame_index: int, channel: int, cell: int) -> np.ndarray:
    """Smooth noise in [-1, 1]: Philox lattice keyed by (seed, frame, channel), bilinear between nodes."""
    H, W = shape
    gh, gw = H // cell + 2, W // cell + 2
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, (frame_index << 16) | channel], dtype=np.uint64)
    lattice = np.random.Generator(np.random.Philox(key=key)).uniform(-1.0, 1.0, size=(gh, gw))
    v, u = np.mgrid[0:H, 0:W] / float(cell)
    v0, u0 = np.floor(v).astype(int), np.floor(u).astype(int)
    fv, fu = v - v0, u - u0
    top = lattice[v0, u0] * (1 - fu) + lattice[v0, u0 + 1] * fu
    bot = lattice[v0 + 1, u0] * (1 - fu) + lattice[v0 + 1, u0 + 1] * fu
    return top * (1 - fv) + bot * fv


def features_from_view(view: View, surface: Surface, frame_index: int, channels: int, seed: int,
                       noise_cell: int = 16, noise_amplitude: float = 0.5) -> FeatureGrid:
    if channels < 2:
        raise ValueError("need at least 2 feature channels")
    H, W = view.mask.shape
    feat = np.zeros((H, W, channels))
    feat[..., 0] = view.mask
    if view.mask.any():
        p = view.points[view.mask]
        _, gy = surface.gradient(p[:, 0], p[:, 1])
        feat[view.mask, 1] = gy / GRADE_NORM
    for ch in range(2, channels):
        feat[..., ch] = noise_amplitude * value_noise((H, W), seed, frame_index, ch, noise_cell)
    return FeatureGrid(feat)


def render_feature_grid(surface: Surface, frame: RoadFrame, cam: CameraModel, channels: int, grid: BevGrid,
                        seed: int = 0, noise_cell: int = 16, noise_amplitude: float = 0.5) -> FeatureGrid:
    """Synthetic image features.

    Channel 0 is the ground mask, channel 1 the forward surface grade at the
    pixel's ground point divided by 0.15 (0 off-ground), the rest seeded
    smooth noise.
    """
    view = cast_rays(surface, frame, cam, grid)
    return features_from_view(view, surface, frame.timestamp, channels, seed, noise_cell, noise_amplitude)


def height_from_depth(depth: np.ndarray, seg: GroundMask | np.ndarray, frame: RoadFrame, cam: CameraModel,
                      grid: BevGrid, reducer: str = "mean") -> HeightMap:
    """Back-project masked depth pixels into the road frame and bin them per BEV cell."""
    mask = seg.mask if isinstance(seg, GroundMask) else np.asarray(seg)
    depth = np.asarray(depth, dtype=np.float64)
    sel = (mask > 0) & np.isfinite(depth) & (depth > 0)
    vv, uu = np.nonzero(sel)
    p_cam = backproject(cam, uu, vv, depth[sel])
    p = transform_points(compose(frame.pose, invert(cam.extrinsic)), p_cam)
    col = np.floor((p[:, 0] - grid.x_min) / grid.mpp).astype(np.intp)
    row = np.floor((p[:, 1] - grid.y_min) / grid.mpp).astype(np.intp)
    ok = (col >= 0) & (col < grid.cols) & (row >= 0) & (row < grid.rows)
    flat = row[ok] * grid.cols + col[ok]
    z = p[ok, 2]
    out = np.full(grid.rows * grid.cols, np.nan)
    if flat.size:
        if reducer == "mean":
            cnt = np.bincount(flat, minlength=out.size)
            tot = np.bincount(flat, weights=z, minlength=out.size)
            hit = cnt > 0
            out[hit] = tot[hit] / cnt[hit]
        elif reducer == "median":
            order = np.lexsort((z, flat))
            fs, zs = flat[order], z[order]
            starts = np.flatnonzero(np.r_[True, fs[1:] != fs[:-1]])
            ends = np.r_[starts[1:], fs.size]
            for s, e in zip(starts, ends):
                out[fs[s]] = np.median(zs[s:e])
        else:
            raise ValueError(f"unknown reducer {reducer!r}")
    return HeightMap(grid, out.reshape(grid.shape), frame)


@dataclass(frozen=True)
class SceneFrame:
    index: int
    frame: RoadFrame
    ego_motion: RigidTransform
    surface: Surface  # in this frame's road coordinates
    mask: np.ndarray
    depth: np.ndarray
    features: np.ndarray
    gt: HeightMap


@dataclass(frozen=True)
class Scene:
    spec: SceneSpec
    rig: RigConfig
    frames: list

    @property
    def camera(self) -> CameraModel:
        return self.rig.camera()

    @property
    def grid(self) -> BevGrid:
        return self.rig.grid()


def generate_scene(spec: SceneSpec, rig: RigConfig = RigConfig()) -> Scene:
    surface = gen_surface(spec)
    traj = gen_trajectory(spec, surface, rig)
    cam, grid = rig.camera(), rig.grid()
    out = []
    for t, (frame, motion, surf) in enumerate(zip(traj.frames, traj.ego_motions, traj.surfaces)):
        view = cast_rays(surf, frame, cam, grid)
        feat = features_from_view(view, surf, t, rig.channels, spec.seed, rig.noise_cell, rig.noise_amplitude)
        gt = rasterize_surface(grid, surf, frame)
        out.append(SceneFrame(t, frame, motion, surf, view.mask.astype(np.uint8), view.depth, feat.values, gt))
    return Scene(spec, rig, out)
