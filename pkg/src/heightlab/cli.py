"""``heightlab`` command line.

Every command writes its outputs plus a single ``manifest.json`` into ``--out``.
Outputs depend only on the manifest contents and the input files, so a rerun
reproduces them byte for byte. Exit codes: 0 ok, 2 usage, 3 data or format
problem, 4 numerical guard.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path


from . import __version__, formats
from .bundle import frame_files, read_scene, write_scene
from .consistency import consistency_loss, warp_heightmap
from .errors import DegenerateGeometryError, FormatError, NumericalGuardError
from .geometry import RigidTransform, compose, invert
from .kernels import BACKEND, num_threads
from .losses import LossWeights
from .metrics import DEFAULT_THRESHOLDS, HeightReport, evaluate, frame_average, pooled
from .render import save_png
from .synth import RigConfig, SceneSpec, generate_scene
from .toytrain import PredictorParams, TrainConfig, merge_batches, predict_heightmap, prepare_scene, trace_csv, train

log = logging.getLogger("heightlab")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_GUARD = 0, 2, 3, 4


class UsageError(Exception):
    pass


def write_manifest(out: Path, command: str, config: dict, inputs, outputs, seed=None) -> None:
    formats.dump_json(out / "manifest.json", {
        "command": command,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": sorted(outputs),
        "seed": seed,
        "version": __version__,
    })


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FormatError(f"cannot create output directory {out}: {exc}") from exc
    return out


def parse_thresholds(text: str) -> tuple:
    try:
        ts = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise UsageError(f"bad --thresholds {text!r}") from None
    if not ts or any(not t > 0 for t in ts):
        raise UsageError("thresholds must be positive")
    return ts


def parse_frames(text: str) -> tuple[int, int]:
    try:
        a, b = (int(s) for s in text.split(":"))
    except ValueError:
        raise UsageError(f"--frames expects a:b, got {text!r}") from None
    return a, b


# ---------------------------------------------------------------- gen

def cmd_gen(args) -> int:
    doc = formats.load_json(args.spec)
    if not isinstance(doc, dict):
        raise FormatError(f"{args.spec}: expected a JSON object")
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        spec = SceneSpec.from_dict(doc)
        rig = RigConfig.from_dict(doc.get("rig"))
        scene = generate_scene(spec, rig)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid scene spec: {exc}") from exc
    out = _out_dir(args.out)
    names = write_scene(scene, out)
    config = spec.to_dict()
    config["rig"] = rig.to_dict()
    write_manifest(out, "gen", config, [args.spec], names, spec.seed)
    print(f"wrote {len(scene.frames)} frames to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- eval

def eval_dirs(pred_dir, gt_dir, thresholds) -> tuple[list, HeightReport, HeightReport]:
    preds, gts = frame_files(pred_dir), frame_files(gt_dir)
    if not gts:
        raise FormatError(f"no gt_NNNN.hgt files in {gt_dir}")
    if sorted(preds) != sorted(gts):
        raise FormatError(f"frame sets differ: pred {sorted(preds)} vs gt {sorted(gts)}")
    rows, pairs = [], []
    for t in sorted(gts):
        p, g = formats.load_heightmap(preds[t]), formats.load_heightmap(gts[t])
        try:
            rows.append((t, evaluate(p, g, thresholds)))
        except ValueError as exc:
            raise FormatError(f"frame {t}: {exc}") from exc
        pairs.append((p, g))
    return rows, pooled(pairs, thresholds), frame_average([r for _, r in rows])


def report_csv(rows, pool: HeightReport, avg: HeightReport) -> str:
    lines = ["frame," + pool.csv_header()]
    lines += [f"{t:04d},{r.csv_row()}" for t, r in rows]
    lines.append(f"pooled,{pool.csv_row()}")
    lines.append(f"frame_mean,{avg.csv_row()}")
    return "\n".join(lines) + "\n"


def cmd_eval(args) -> int:
    ts = parse_thresholds(args.thresholds)
    rows, pool, avg = eval_dirs(args.pred, args.gt, ts)
    text = report_csv(rows, pool, avg)
    if args.out:
        out = _out_dir(args.out)
        (out / "report.csv").write_text(text)
        write_manifest(out, "eval", {"thresholds": list(ts)}, [args.pred, args.gt], ["report.csv"])
    sys.stdout.write(text)
    print(pool.table("pooled"))
    print(avg.table("frame mean").split("\n", 1)[1])
    return EXIT_OK


# ---------------------------------------------------------------- warp

def chained_ego_motion(motions, a: int, b: int) -> RigidTransform:
    """ego(a) -> ego(b) for a <= b; the inverse chain when a > b."""
    lo, hi = min(a, b), max(a, b)
    m = RigidTransform.identity()
    for k in range(lo + 1, hi + 1):
        m = compose(motions[k], m)
    return m if a <= b else invert(m)


def cmd_warp(args) -> int:
    a, b = parse_frames(args.frames)
    scene_dir = Path(args.scene)
    poses = formats.read_poses(scene_dir / "poses.txt")
    motions = formats.read_poses(scene_dir / "ego_motion.txt")
    n = len(poses)
    if not (0 <= a < n and 0 <= b < n):
        raise UsageError(f"frames {a}:{b} outside 0..{n - 1}")
    heights = frame_files(args.heights or scene_dir)
    if a not in heights or b not in heights:
        raise FormatError(f"missing heightmap for frame {a} or {b}")
    h_prev = formats.load_heightmap(heights[a])
    h_curr = formats.load_heightmap(heights[b])
    t_rel = compose(poses[b], compose(chained_ego_motion(motions, a, b), invert(poses[a])))
    warped, m = warp_heightmap(h_prev, t_rel, h_curr.grid)
    loss = consistency_loss(warped, h_curr, m)
    out = _out_dir(args.out)
    formats.save_heightmap(out / "warped.hgt", warped)
    formats.write_pgm(out / "overlap.pgm", m.mask)
    (out / "loss.txt").write_text(f"{loss!r}\n")
    write_manifest(out, "warp", {"frames": [a, b]}, [scene_dir, heights[a], heights[b]],
                   ["warped.hgt", "overlap.pgm", "loss.txt"])
    print(f"L_cons {loss:.9g}")
    return EXIT_OK


# ---------------------------------------------------------------- train / predict

def train_config(doc: dict) -> TrainConfig:
    known = {"learning_rate", "steps", "batch_frames", "lambda_sa", "lambda_cons", "lambda_h", "seed", "consistency_target"}
    extra = set(doc) - known
    if extra:
        raise FormatError(f"unknown config keys: {sorted(extra)}")
    d = LossWeights()
    try:
        return TrainConfig(
            learning_rate=float(doc.get("learning_rate", 0.05)),
            steps=int(doc.get("steps", 200)),
            batch_frames=int(doc.get("batch_frames", 4)),
            loss_weights=LossWeights(float(doc.get("lambda_sa", d.lambda_sa)), float(doc.get("lambda_cons", d.lambda_cons)),
                                     float(doc.get("lambda_h", d.lambda_h))),
            seed=int(doc.get("seed", 0)),
            consistency_target=str(doc.get("consistency_target", "pred")),
        )
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid train config: {exc}") from exc


def config_dict(cfg: TrainConfig) -> dict:
    w = cfg.loss_weights
    return {"learning_rate": cfg.learning_rate, "steps": cfg.steps, "batch_frames": cfg.batch_frames,
            "lambda_sa": w.lambda_sa, "lambda_cons": w.lambda_cons, "lambda_h": w.lambda_h, "seed": cfg.seed,
            "consistency_target": cfg.consistency_target}


def write_predictions(params: PredictorParams, scene, frames, out: Path) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    batch = prepare_scene(scene, frames=frames)
    names = []
    for t, fp in zip(frames, batch.frames):
        formats.save_heightmap(out / f"pred_{t:04d}.hgt", predict_heightmap(params, fp))
        names.append(f"pred_{t:04d}.hgt")
    return names


def cmd_train(args) -> int:
    doc = formats.load_json(args.config)
    if not isinstance(doc, dict):
        raise FormatError(f"{args.config}: expected a JSON object")
    if args.seed is not None:
        doc["seed"] = args.seed
    cfg = train_config(doc)
    scenes = [read_scene(p) for p in args.scenes]
    rigs = {s.rig for s in scenes}
    if len(rigs) != 1:
        raise FormatError("all training scenes must share one rig")
    batches, held = [], []
    for s in scenes:
        n = len(s.frames)
        k = min(cfg.batch_frames, n)
        batches.append(prepare_scene(s, frames=range(k)))
        held.append(list(range(k, n)) if k < n else list(range(n)))
    params, trace = train(cfg, merge_batches(batches))

    out = _out_dir(args.out)
    formats.save_params(out / "params.prm", params.weight, params.bias)
    (out / "trace.csv").write_text(trace_csv(trace))
    names = ["params.prm", "trace.csv", "report.csv"]
    rows, pairs = [], []
    for i, (s, frames) in enumerate(zip(scenes, held)):
        sub = f"pred/{i:02d}"
        names += [f"{sub}/{nm}" for nm in write_predictions(params, s, frames, out / sub)]
        for t in frames:
            p = formats.load_heightmap(out / sub / f"pred_{t:04d}.hgt")
            g = s.frames[t].gt
            rows.append((f"{i:02d}/{t:04d}", evaluate(p, g)))
            pairs.append((p, g))
    pool, avg = pooled(pairs), frame_average([r for _, r in rows])
    lines = ["frame," + pool.csv_header()] + [f"{t},{r.csv_row()}" for t, r in rows]
    lines += [f"pooled,{pool.csv_row()}", f"frame_mean,{avg.csv_row()}"]
    (out / "report.csv").write_text("\n".join(lines) + "\n")
    write_manifest(out, "train", config_dict(cfg), args.scenes, names, cfg.seed)
    print(f"final loss {trace[-1].loss:.6g} after {len(trace)} steps")
    print(pool.table("held-out"))
    return EXIT_OK


def cmd_predict(args) -> int:
    w, bias = formats.load_params(args.params)
    params = PredictorParams(w, bias)
    scene = read_scene(args.scene)
    out = _out_dir(args.out)
    names = write_predictions(params, scene, list(range(len(scene.frames))), out)
    write_manifest(out, "predict", {}, [args.params, args.scene], names)
    print(f"wrote {len(names)} predictions to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- render

def cmd_render(args) -> int:
    if args.scale < 1:
        raise UsageError("--scale must be >= 1")
    hm = formats.load_heightmap(args.heightmap)
    png = Path(args.out)
    png.parent.mkdir(parents=True, exist_ok=True)
    save_png(png, hm, args.scale)
    print(f"wrote {png}")
    return EXIT_OK


# ---------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heightlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"heightlab {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic scene bundle")
    g.add_argument("--spec", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(fn=cmd_gen)

    e = sub.add_parser("eval", help="compare pred_NNNN.hgt against gt_NNNN.hgt")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--thresholds", default=",".join(f"{t:g}" for t in DEFAULT_THRESHOLDS))
    e.add_argument("--out")
    e.set_defaults(fn=cmd_eval)

    w = sub.add_parser("warp", help="warp frame a's heightmap into frame b")
    w.add_argument("--scene", required=True, help="bundle with poses.txt and ego_motion.txt")
    w.add_argument("--heights", help="directory of gt_/pred_NNNN.hgt (default: the bundle)")
    w.add_argument("--frames", required=True, help="a:b")
    w.add_argument("--out", required=True)
    w.set_defaults(fn=cmd_warp)

    t = sub.add_parser("train", help="fit the weight predictor on scene bundles")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("scenes", nargs="+")
    t.set_defaults(fn=cmd_train)

    pr = sub.add_parser("predict", help="predict heightmaps for a bundle")
    pr.add_argument("--params", required=True)
    pr.add_argument("--scene", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(fn=cmd_predict)

    r = sub.add_parser("render", help="colour-map a heightmap to PNG")
    r.add_argument("heightmap")
    r.add_argument("--out", required=True)
    r.add_argument("--scale", type=int, default=2)
    r.set_defaults(fn=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    log.debug("backend %s, %d threads", BACKEND, num_threads())
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"heightlab: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalGuardError, DegenerateGeometryError) as exc:
        print(f"heightlab: numerical guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (FormatError, ValueError, OSError) as exc:
        print(f"heightlab: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
