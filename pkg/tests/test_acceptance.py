"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from heightlab import formats
from heightlab.ablation import run_ablation
from heightlab.cli import main
from heightlab.consistency import consistency_loss, relative_transform, warp_heightmap
from heightlab.fusion import confidence_heightmap, fuse_features, softmax_weights
from heightlab.geometry import compose, invert, rot_z, translate
from heightlab.heightgrid import BevGrid, HeightMap, SlopeAnchorSet, rasterize_surface
from heightlab.losses import LossWeights
from heightlab.metrics import acc_at, mae, rmse
from heightlab.synth import RigConfig, SceneSpec, Surface, generate_scene, height_from_depth

from helpers import brute_force_metrics, fd_relative_error

THRESHOLDS = (0.05, 0.1, 0.2)


@pytest.fixture
def verdict(capsys):
    def emit(n: int, name: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {name}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail
    return emit


def test_1_metric_oracle(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst, order_ok = 0.0, True
    for k in range(20):
        shape = tuple(rng.integers(4, 60, 2))
        g = rng.normal(0, 1.0, shape)
        p = g + rng.normal(0, rng.uniform(0.01, 0.5), shape)
        p[rng.random(shape) < 0.1] = np.nan
        g[rng.random(shape) < 0.1] = np.nan
        grid = BevGrid(*shape)
        P, G = HeightMap(grid, p), HeightMap(grid, g)
        bm, br, ba = brute_force_metrics(p, g, THRESHOLDS)
        diffs = [abs(mae(P, G) - bm), abs(rmse(P, G) - br)] + [abs(acc_at(P, G, t) - ba[t]) for t in THRESHOLDS]
        worst = max(worst, max(diffs))
        order_ok &= rmse(P, G) >= mae(P, G)
    dt = time.perf_counter() - t0
    verdict(1, "metric oracle", worst <= 1e-9 and order_ok and dt < 5.0,
            f"max diff {worst:.2e}, rmse>=mae {order_ok}, {dt:.2f} s")


def test_2_softmax_fusion_invariants(verdict):
    rng = np.random.default_rng(7)
    A, N, C = 5, 1000, 6
    logits = rng.normal(0, 4, (A, 1, N))
    feats = rng.normal(0, 1, (A, 1, N, C))
    grid = BevGrid(1, N)
    heights = rng.normal(0, 1, (A, 1, N))
    anchors = SlopeAnchorSet(grid, tuple(range(A)), heights)

    w = softmax_weights(logits, grid=grid)
    f = fuse_features(feats, w)
    h = confidence_heightmap(anchors, w).values
    sum_err = float(np.abs(w.weights.sum(axis=0) - 1).max())
    envelope = bool(np.all(f >= feats.min(0) - 1e-12) and np.all(f <= feats.max(0) + 1e-12)
                    and np.all(h >= heights.min(0) - 1e-12) and np.all(h <= heights.max(0) + 1e-12))

    pick = rng.integers(0, A, N)
    onehot = np.full((A, 1, N), -1e3)
    onehot[pick, 0, np.arange(N)] = 0.0
    w1 = softmax_weights(onehot, grid=grid)
    exact = bool(np.array_equal(fuse_features(feats, w1)[0], feats[pick, 0, np.arange(N)])
                 and np.array_equal(confidence_heightmap(anchors, w1).values[0], heights[pick, 0, np.arange(N)]))

    shifted = softmax_weights(logits + rng.normal(0, 50, (1, 1, N)), grid=grid)
    shift_err = max(float(np.abs(shifted.weights - w.weights).max()),
                    float(np.abs(fuse_features(feats, shifted) - f).max()),
                    float(np.abs(confidence_heightmap(anchors, shifted).values - h).max()))
    ok = sum_err <= 1e-6 and exact and envelope and shift_err <= 1e-9
    verdict(2, "softmax/fusion invariants", ok,
            f"sum err {sum_err:.1e}, one-hot exact {exact}, envelope {envelope}, shift err {shift_err:.1e}")


def test_3_warp_round_trip(verdict):
    grid = BevGrid()
    surf = Surface(amplitude=0.3, wavelength=60.0, phase=0.7)
    assert surf.max_slope <= 0.04
    h = rasterize_surface(grid, surf)
    rng = np.random.default_rng(11)
    worst, cells = 0.0, 0
    for _ in range(10):
        t = compose(translate(rng.uniform(-1, 1), rng.uniform(-3, 3), 0.0), rot_z(rng.uniform(-0.1, 0.1)))
        fwd, m1 = warp_heightmap(h, t)
        back, m2 = warp_heightmap(fwd, invert(t))
        both = m2.mask & back.valid
        cells += int(both.sum())
        worst = max(worst, float(np.abs(back.values[both] - h.values[both]).max()))
    verdict(3, "warp round trip", worst <= 1e-3 and cells > 0, f"max err {worst:.2e} m over {cells} cells")


def sequence_losses(scene):
    out = []
    for prev, curr in zip(scene.frames, scene.frames[1:]):
        t_rel = relative_transform(prev.frame, curr.frame, curr.ego_motion)
        warped, m = warp_heightmap(prev.gt, t_rel, curr.gt.grid)
        out.append(consistency_loss(warped, curr.gt, m))
    return np.array(out)


def test_4_static_world_consistency(verdict):
    grade = 0.08
    rig = RigConfig()
    bound = rig.meters_per_pixel * grade
    straight = sequence_losses(generate_scene(SceneSpec("grade", {"grade": grade}, seed=3, length=20), rig))
    turning = sequence_losses(generate_scene(SceneSpec("grade", {"grade": grade}, seed=3, length=20, yaw_rate=0.2), rig))
    flat = sequence_losses(generate_scene(SceneSpec("flat", seed=3, length=20, yaw_rate=0.2), rig))
    ok = len(straight) == 19 and straight.max() <= bound and turning.max() <= bound and flat.max() <= 1e-6
    verdict(4, "static-world consistency", ok,
            f"grade max {straight.max():.2e}, turning grade max {turning.max():.2e} (bound {bound:.3f}), "
            f"flat max {flat.max():.2e}")


def test_5_gradient_check(verdict):
    worst, terms_nonzero = 0.0, True
    for seed in range(10):
        err, cache = fd_relative_error(seed, LossWeights(5.0, 2.0, 10.0))
        worst = max(worst, err)
        terms_nonzero &= cache.l_sa > 0 and cache.l_cons > 0 and cache.l_h > 0
    verdict(5, "gradient check", worst <= 1e-4 and terms_nonzero,
            f"worst relative error {worst:.2e} over 10 draws, all terms active {terms_nonzero}")


def test_6_toy_ablation(verdict):
    t0 = time.perf_counter()
    res = run_ablation()
    dt = time.perf_counter() - t0
    base, saa, full = res["uniform"], res["saa"], res["saa+cons"]
    gain = 1 - min(saa.mae, full.mae) / base.mae
    gain_each = 1 - max(saa.mae, full.mae) / base.mae
    std_drop = 1 - full.frame_std / saa.frame_std
    ok = gain_each >= 0.30 and full.mae <= saa.mae and std_drop >= 0.10 and dt < 120
    verdict(6, "toy ablation", ok,
            f"MAE uniform {base.mae:.3f}, saa {saa.mae:.3f}, saa+cons {full.mae:.3f}; "
            f"improvement >= {gain_each:.0%} (best {gain:.0%}); per-frame std {saa.frame_std:.4f} -> "
            f"{full.frame_std:.4f} ({std_drop:.0%} lower); {dt:.0f} s")


FLOAT_FLOOR = 1e-9  # the flat-scene bound is exactly zero


def test_7_depth_height_closure(verdict):
    rig = RigConfig()
    specs = {
        "flat": SceneSpec("flat", length=2),
        "grade": SceneSpec("grade", {"grade": 0.07}, length=2),
        "crest": SceneSpec("crest", {"amplitude": 1.2, "wavelength": 70.0}, length=2),
    }
    parts, ok = [], True
    for name, spec in specs.items():
        scene = generate_scene(spec, rig)
        worst, bound = 0.0, 0.0
        for f in scene.frames:
            hm = height_from_depth(f.depth, f.mask, f.frame, scene.camera, scene.grid)
            both = hm.valid & f.gt.valid
            X, Y = scene.grid.centers()
            gx, gy = f.surface.gradient(X, Y)
            bound = 2 * scene.grid.mpp * float(np.hypot(gx, gy).max()) + FLOAT_FLOOR
            worst = max(worst, float(np.abs(hm.values[both] - f.gt.values[both]).max()))
            ok &= both.sum() > 100 and worst <= bound
        parts.append(f"{name} {worst:.1e}<={bound:.1e}")
    verdict(7, "depth-to-height closure", ok, ", ".join(parts))


def test_8_format_round_trips(verdict, tmp_path):
    rng = np.random.default_rng(5)
    same = {}
    g = BevGrid(6, 4, 0.5, -1.0, 0.0)
    vals = rng.normal(size=g.shape)
    vals[2, 1] = np.nan
    formats.save_heightmap(tmp_path / "a.hgt", HeightMap(g, vals))
    formats.save_heightmap(tmp_path / "b.hgt", formats.load_heightmap(tmp_path / "a.hgt"))
    same["HGT1"] = (tmp_path / "a.hgt").read_bytes() == (tmp_path / "b.hgt").read_bytes()

    formats.save_params(tmp_path / "a.prm", rng.normal(size=(8, 5)), rng.normal(size=5))
    formats.save_params(tmp_path / "b.prm", *formats.load_params(tmp_path / "a.prm"))
    same["PRM1"] = (tmp_path / "a.prm").read_bytes() == (tmp_path / "b.prm").read_bytes()

    poses = [compose(translate(*rng.normal(size=3)), rot_z(rng.uniform(-3, 3))) for _ in range(4)]
    formats.write_poses(tmp_path / "a.txt", poses)
    formats.write_poses(tmp_path / "b.txt", formats.read_poses(tmp_path / "a.txt"))
    same["pose"] = (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()

    formats.write_pgm(tmp_path / "a.pgm", rng.random((9, 7)) > 0.5)
    formats.write_pgm(tmp_path / "b.pgm", formats.read_pgm(tmp_path / "a.pgm"))
    same["PGM"] = (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()

    bad_hgt = tmp_path / "bad.hgt"
    bad_hgt.write_bytes(b"HGT2" + (tmp_path / "a.hgt").read_bytes()[4:])
    bad_prm = tmp_path / "bad.prm"
    bad_prm.write_bytes(b"XRM1" + (tmp_path / "a.prm").read_bytes()[4:])
    codes = [
        main(["render", str(bad_hgt), "--out", str(tmp_path / "x.png")]),
        main(["predict", "--params", str(bad_prm), "--scene", str(tmp_path), "--out", str(tmp_path / "p")]),
    ]
    ok = all(same.values()) and codes == [3, 3]
    verdict(8, "format round trips", ok,
            ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items()) + f"; bad magic exit {codes}")


def run_cli(args, threads):
    env = dict(os.environ, HEIGHTLAB_THREADS=str(threads))
    r = subprocess.run([sys.executable, "-m", "heightlab.cli", *args], env=env, capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    return r


def snapshot(d: Path) -> dict:
    return {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_9_determinism(verdict, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text('{"surface_kind": "composite", "params": {"grade": 0.04, "amplitude": 0.5}, "seed": 21, "length": 8}\n')
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"learning_rate": 0.05, "steps": 60, "batch_frames": 4}\n')
    gens, trains = [], []
    for run, threads in (("a", 1), ("b", 1), ("c", 8)):
        run_cli(["gen", "--spec", str(spec), "--out", str(tmp_path / f"gen_{run}")], threads)
        gens.append(snapshot(tmp_path / f"gen_{run}"))
    # train always reads the same bundle so manifests name identical inputs
    for run, threads in (("a", 1), ("b", 1), ("c", 8)):
        run_cli(["train", "--config", str(cfg), "--out", str(tmp_path / f"train_{run}"), str(tmp_path / "gen_a")], threads)
        trains.append(snapshot(tmp_path / f"train_{run}"))
    gen_ok = gens[0] == gens[1] == gens[2] and len(gens[0]) > 4
    train_ok = trains[0] == trains[1] == trains[2] and "params.prm" in trains[0]
    verdict(9, "determinism", gen_ok and train_ok,
            f"gen {len(gens[0])} files identical {gen_ok}, train {len(trains[0])} files identical {train_ok}, "
            "runs: 1 thread x2 and 8 threads")
