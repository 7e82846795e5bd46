"""Scene bundle directory layout.

::

    scene.json          SceneSpec plus the "rig" block used to render it
    poses.txt           road<-ego pose per frame (pose file format)
    ego_motion.txt      line t maps ego(t-1) -> ego(t); line 0 is identity
    mask_%04d.pgm       ground mask
    feat_%04d.hgt       feature grid (C planes stacked, mpp field = C)
    depth_%04d.hgt      camera z-depth, NaN where the ray misses
    gt_%04d.hgt         ground-truth heightmap in the frame's road coordinates
    manifest.json       run manifest (written by the CLI)
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from . import formats
from .geometry import RoadFrame
from .synth import RigConfig, Scene, SceneFrame, SceneSpec

FRAME_RE = re.compile(r"^(?:gt|pred)_(\d{4})\.hgt$")


def write_scene(scene: Scene, out_dir) -> list[str]:
    """Write every bundle file except the manifest; returns the file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = scene.spec.to_dict()
    doc["rig"] = scene.rig.to_dict()
    formats.dump_json(out / "scene.json", doc)
    formats.write_poses(out / "poses.txt", [f.frame.pose for f in scene.frames], "road<-ego, row-major [R|t]")
    formats.write_poses(out / "ego_motion.txt", [f.ego_motion for f in scene.frames], "ego(t-1)->ego(t), row-major [R|t]")
    names = ["scene.json", "poses.txt", "ego_motion.txt"]
    for f in scene.frames:
        t = f.index
        formats.write_pgm(out / f"mask_{t:04d}.pgm", f.mask)
        formats.save_feature_grid(out / f"feat_{t:04d}.hgt", f.features)
        formats.write_hgt(out / f"depth_{t:04d}.hgt", f.depth)
        formats.save_heightmap(out / f"gt_{t:04d}.hgt", f.gt)
        names += [f"mask_{t:04d}.pgm", f"feat_{t:04d}.hgt", f"depth_{t:04d}.hgt", f"gt_{t:04d}.hgt"]
    return names


@dataclass(frozen=True)
class LoadedScene(Scene):
    path: Path = Path(".")


def read_scene(path) -> LoadedScene:
    d = Path(path)
    doc = formats.load_json(d / "scene.json")
    try:
        spec = SceneSpec.from_dict(doc)
        rig = RigConfig.from_dict(doc.get("rig"))
    except (TypeError, ValueError) as exc:
        raise formats.FormatError(f"{d / 'scene.json'}: {exc}") from exc
    poses = formats.read_poses(d / "poses.txt")
    motions = formats.read_poses(d / "ego_motion.txt")
    if len(poses) != len(motions):
        raise formats.FormatError(f"{d}: {len(poses)} poses but {len(motions)} ego motions")
    frames = []
    for t, (pose, motion) in enumerate(zip(poses, motions)):
        gt = formats.load_heightmap(d / f"gt_{t:04d}.hgt")
        depth, _ = formats.read_hgt(d / f"depth_{t:04d}.hgt")
        frame = RoadFrame(pose, t)
        frames.append(SceneFrame(
            index=t,
            frame=frame,
            ego_motion=motion,
            surface=None,
            mask=formats.read_pgm(d / f"mask_{t:04d}.pgm"),
            depth=depth,
            features=formats.load_feature_grid(d / f"feat_{t:04d}.hgt"),
            gt=gt.__class__(gt.grid, gt.values, frame),
        ))
    return LoadedScene(spec, rig, frames, d)


def frame_files(directory) -> dict[int, Path]:
    """Map frame index -> heightmap file for ``gt_NNNN.hgt`` / ``pred_NNNN.hgt`` names."""
    out: dict[int, Path] = {}
    for p in sorted(Path(directory).iterdir()):
        m = FRAME_RE.match(p.name)
        if m:
            out.setdefault(int(m.group(1)), p)
    return out
