"""Linear anchor-weight predictor trained with hand-derived gradients.

Pipeline per frame: anchor projection + feature sampling (fixed), a shared
per-cell linear map from features to anchor logits, masked softmax, and the
confidence decode ``H = sum_a alpha_a Z_a``. The loss stacks the ground-mask
IoU term, the temporal consistency L1 and the supervised height L1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .consistency import plan_warp, relative_transform
from .errors import NumericalGuardError
from .fusion import FeatureGrid, project_and_sample, softmax_weights
from .geometry import EPS_DEPTH, CameraModel
from .heightgrid import BevGrid, HeightMap, SlopeAnchorSet, make_anchor_set
from .losses import LossWeights

log = logging.getLogger(__name__)


@dataclass
class PredictorParams:
    weight: np.ndarray  # (C, A)
    bias: np.ndarray  # (A,)

    def __post_init__(self):
        self.weight = np.array(self.weight, dtype=np.float64)
        self.bias = np.array(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError("weight must be C x A and bias length A")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("parameters must be finite")

    @classmethod
    def zeros(cls, channels: int, anchors: int) -> PredictorParams:
        return cls(np.zeros((channels, anchors)), np.zeros(anchors))

    @property
    def channels(self) -> int:
        return self.weight.shape[0]

    @property
    def anchors(self) -> int:
        return self.weight.shape[1]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.weight.ravel(), self.bias])

    @classmethod
    def from_flat(cls, v: np.ndarray, channels: int, anchors: int) -> PredictorParams:
        v = np.asarray(v, dtype=np.float64)
        return cls(v[: channels * anchors].reshape(channels, anchors), v[channels * anchors:])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    steps: int = 200
    batch_frames: int = 4
    loss_weights: LossWeights = LossWeights()
    seed: int = 0
    consistency_target: str = "pred"  # "gt": warped prediction vs current ground truth

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.steps < 1 or self.batch_frames < 1:
            raise ValueError("steps and batch_frames must be >= 1")
        if self.consistency_target not in ("pred", "gt"):
            raise ValueError("consistency_target must be 'pred' or 'gt'")


@dataclass(frozen=True)
class FramePrep:
    """Parameter-independent inputs of one frame (cells flattened row-major)."""

    grid: BevGrid
    bev_in: np.ndarray  # (N, C) predictor input
    valid: np.ndarray  # (A, N)
    dead: np.ndarray  # (N,)
    Z: np.ndarray  # (A, N) anchor heights
    gt: np.ndarray  # (N,), NaN = no data
    X: np.ndarray
    Y: np.ndarray
    cam_R: np.ndarray  # camera <- road
    cam_t: np.ndarray
    cam: CameraModel
    ground: np.ndarray  # (H, W) float 0/1


@dataclass(frozen=True)
class PairPrep:
    """Warp from frame ``prev`` to frame ``curr`` in linear gather form."""

    prev: int
    curr: int
    targets: np.ndarray  # (M,) target cell indices with a valid source
    src: np.ndarray  # (M, 4) source cell indices
    w: np.ndarray  # (M, 4) bilinear weights
    gain: float
    offset: np.ndarray  # (M,)


@dataclass
class Batch:
    frames: list = field(default_factory=list)
    pairs: list = field(default_factory=list)


def bev_inputs(sampled: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Per-cell predictor input: mean of the sampled features over valid anchors."""
    A = sampled.shape[0]
    s = sampled.reshape(A, -1, sampled.shape[-1])
    v = valid.reshape(A, -1)
    cnt = np.maximum(v.sum(axis=0), 1)
    return np.einsum("an,anc->nc", v.astype(np.float64), s) / cnt[:, None]


def prepare_frame(features: np.ndarray, ground: np.ndarray, gt: Optional[HeightMap], frame, cam: CameraModel,
                  anchors: SlopeAnchorSet) -> FramePrep:
    sampled, valid = project_and_sample(anchors, frame, cam, FeatureGrid(features))
    A = len(anchors)
    grid = anchors.grid
    X, Y = grid.centers()
    cr = frame.camera_from_road(cam)
    return FramePrep(
        grid=grid,
        bev_in=bev_inputs(sampled, valid),
        valid=valid.reshape(A, -1),
        dead=~valid.reshape(A, -1).any(axis=0),
        Z=anchors.anchors.reshape(A, -1),
        gt=(gt.values.ravel().copy() if gt is not None else np.full(grid.rows * grid.cols, np.nan)),
        X=X.ravel(),
        Y=Y.ravel(),
        cam_R=cr.rotation,
        cam_t=cr.translation,
        cam=cam,
        ground=np.asarray(ground, dtype=np.float64),
    )


def _gather_corners(col: np.ndarray, row: np.ndarray, H: int, W: int):
    u0 = np.clip(np.minimum(np.floor(col).astype(np.intp), W - 2), 0, None)
    v0 = np.clip(np.minimum(np.floor(row).astype(np.intp), H - 2), 0, None)
    u1 = np.minimum(u0 + 1, W - 1)
    v1 = np.minimum(v0 + 1, H - 1)
    fu, fv = col - u0, row - v0
    idx = np.stack([v0 * W + u0, v0 * W + u1, v1 * W + u0, v1 * W + u1], axis=1)
    w = np.stack([(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv], axis=1)
    return idx, w


def prepare_pair(prev: int, curr: int, fp: FramePrep, fc: FramePrep, frame_prev, frame_curr, ego_motion) -> PairPrep:
    t_rel = relative_transform(frame_prev, frame_curr, ego_motion)
    plan = plan_warp(t_rel, fp.grid, fc.grid)
    # dead source cells are parameter-independent no-data: probe them with NaN
    probe = np.where(fp.dead, np.nan, 0.0).reshape(fp.grid.shape)
    _, ok = kernels.bilinear_gather(probe[..., None], plan.src_col, plan.src_row)
    targets = np.flatnonzero(ok)
    idx, w = _gather_corners(plan.src_col.ravel()[targets], plan.src_row.ravel()[targets], *fp.grid.shape)
    return PairPrep(prev, curr, targets, idx, w, plan.gain, plan.offset.ravel()[targets])


def prepare_scene(scene, anchors: Optional[SlopeAnchorSet] = None, frames: Optional[Sequence[int]] = None) -> Batch:
    """Batch for consecutive frames of a :class:`~heightlab.synth.Scene`-like object."""
    cam = scene.camera
    anchors = anchors or make_anchor_set(scene.grid, scene.rig.slopes)
    idx = list(range(len(scene.frames))) if frames is None else list(frames)
    batch = Batch()
    for i in idx:
        f = scene.frames[i]
        batch.frames.append(prepare_frame(f.features, f.mask, f.gt, f.frame, cam, anchors))
    for k in range(1, len(idx)):
        if idx[k] != idx[k - 1] + 1:
            continue
        f0, f1 = scene.frames[idx[k - 1]], scene.frames[idx[k]]
        batch.pairs.append(prepare_pair(k - 1, k, batch.frames[k - 1], batch.frames[k], f0.frame, f1.frame, f1.ego_motion))
    return batch


def merge_batches(batches: Sequence[Batch]) -> Batch:
    out = Batch()
    for b in batches:
        base = len(out.frames)
        out.frames.extend(b.frames)
        for p in b.pairs:
            out.pairs.append(PairPrep(p.prev + base, p.curr + base, p.targets, p.src, p.w, p.gain, p.offset))
    return out


def predict_logits(params: PredictorParams, bev_feat: np.ndarray) -> np.ndarray:
    """``(..., C)`` features -> ``(A, ...)`` logits, ``weight^T f + bias`` per cell."""
    f = np.asarray(bev_feat, dtype=np.float64)
    if f.shape[-1] != params.channels:
        raise ValueError(f"feature channels {f.shape[-1]} != predictor channels {params.channels}")
    z = f @ params.weight + params.bias
    return np.moveaxis(z, -1, 0)


def predict_heights(params: PredictorParams, fp: FramePrep) -> np.ndarray:
    """Confidence-decoded heights ``(N,)`` with NaN on dead cells."""
    alpha = softmax_weights(predict_logits(params, fp.bev_in), fp.valid).weights
    h = np.einsum("an,an->n", alpha, fp.Z)
    return np.where(fp.dead, np.nan, h)


def predict_heightmap(params: PredictorParams, fp: FramePrep, frame=None) -> HeightMap:
    return HeightMap(fp.grid, predict_heights(params, fp).reshape(fp.grid.shape), frame)


@dataclass
class _FrameCache:
    alpha: np.ndarray
    h: np.ndarray
    argmax: np.ndarray
    mass: np.ndarray
    live: np.ndarray
    u: np.ndarray
    v: np.ndarray
    pc: np.ndarray
    raw: np.ndarray
    foot: np.ndarray
    inter: float
    union: float
    l_sa: float
    l_h: float
    h_sel: np.ndarray


@dataclass
class Cache:
    params: PredictorParams
    batch: Batch
    weights: LossWeights
    consistency_target: str
    frames: list
    pair_terms: list
    loss: float
    l_sa: float
    l_cons: float
    l_h: float


def _forward_frame(params: PredictorParams, fp: FramePrep) -> _FrameCache:
    wf = softmax_weights(predict_logits(params, fp.bev_in), fp.valid)
    alpha = wf.weights
    h = (alpha * fp.Z).sum(axis=0)
    argmax = alpha.argmax(axis=0)
    mass = np.take_along_axis(alpha, argmax[None], axis=0)[0]

    pts = np.stack([fp.X, fp.Y, h], axis=1)
    pc = pts @ fp.cam_R.T + fp.cam_t
    live = ~fp.dead & (pc[:, 2] > EPS_DEPTH)
    cam = fp.cam
    z = pc[live, 2]
    u = cam.fx * pc[live, 0] / z + cam.cx
    v = cam.fy * pc[live, 1] / z + cam.cy
    raw = kernels.bilinear_splat(u, v, mass[live], fp.ground.shape)
    foot = np.minimum(raw, 1.0)
    inter = float(np.minimum(foot, fp.ground).sum())
    union = float(np.maximum(foot, fp.ground).sum())
    if union <= 0:
        raise ValueError("IoU undefined: empty footprint and empty ground mask")
    h_sel = ~fp.dead & np.isfinite(fp.gt)
    if not h_sel.any():
        raise ValueError("no jointly valid cell for the height loss")
    l_h = float(np.abs(h[h_sel] - fp.gt[h_sel]).mean())
    return _FrameCache(alpha, h, argmax, mass, live, u, v, pc, raw, foot, inter, union, 1.0 - inter / union, l_h, h_sel)


def forward_loss(params: PredictorParams, batch: Batch, weights: LossWeights = LossWeights(),
                 consistency_target: str = "pred") -> tuple[float, Cache]:
    """Total loss over a batch plus everything :func:`backward` needs."""
    if weights.lambda_cons > 0 and not batch.pairs:
        raise ValueError("consistency loss needs at least one pair of consecutive frames")
    fcs = [_forward_frame(params, fp) for fp in batch.frames]
    pair_terms = []
    for p in batch.pairs:
        hp = fcs[p.prev].h
        warped = p.gain * np.einsum("mk,mk->m", p.w, hp[p.src]) + p.offset
        fc = batch.frames[p.curr]
        ref = fcs[p.curr].h if consistency_target == "pred" else fc.gt
        sel = ~fc.dead[p.targets] & np.isfinite(ref[p.targets])
        diff = warped[sel] - ref[p.targets][sel]
        pair_terms.append((sel, diff, float(np.abs(diff).mean()) if diff.size else 0.0))
    l_sa = float(np.mean([c.l_sa for c in fcs]))
    l_h = float(np.mean([c.l_h for c in fcs]))
    l_cons = float(np.mean([t[2] for t in pair_terms])) if pair_terms else 0.0
    loss = weights.lambda_sa * l_sa + weights.lambda_cons * l_cons + weights.lambda_h * l_h
    return loss, Cache(params, batch, weights, consistency_target, fcs, pair_terms, loss, l_sa, l_cons, l_h)


def backward(cache: Cache) -> PredictorParams:
    """Exact gradient of :func:`forward_loss` w.r.t. the predictor parameters.

    Subgradient choices: ``sign(0) = 0`` for the L1 terms; the clamp passes
    gradient only below 1; ``min``/``max`` in the soft IoU route to the
    footprint on ``f < m`` / ``f >= m``; ``max_a alpha_a`` routes to the
    first maximizer.
    """
    batch, lw = cache.batch, cache.weights
    nF = len(batch.frames)
    dH = [np.zeros(fp.Z.shape[1]) for fp in batch.frames]

    for fp, fc, d in zip(batch.frames, cache.frames, dH):
        sel = fc.h_sel
        d[sel] += lw.lambda_h / nF * np.sign(fc.h[sel] - fp.gt[sel]) / sel.sum()

    nP = len(batch.pairs)
    if nP and lw.lambda_cons:
        for p, (sel, diff, _) in zip(batch.pairs, cache.pair_terms):
            if not diff.size:
                continue
            g = lw.lambda_cons / nP * np.sign(diff) / diff.size
            tgt = p.targets[sel]
            if cache.consistency_target == "pred":
                dH[p.curr][tgt] -= g  # targets are unique
            contrib = (p.gain * g)[:, None] * p.w[sel]
            dH[p.prev] += np.bincount(p.src[sel].ravel(), weights=contrib.ravel(), minlength=dH[p.prev].size)

    grads_w = np.zeros_like(cache.params.weight)
    grads_b = np.zeros_like(cache.params.bias)
    for fp, fc, d in zip(batch.frames, cache.frames, dH):
        dmass = np.zeros_like(fc.mass)
        if lw.lambda_sa:
            m = fp.ground
            dmin = (fc.foot < m).astype(np.float64)
            dmax = (fc.foot >= m).astype(np.float64)
            dfoot = -(dmin * fc.union - fc.inter * dmax) / fc.union**2 * (lw.lambda_sa / nF)
            draw = dfoot * (fc.raw < 1.0)
            dm_live, du, dv = kernels.bilinear_splat_adjoint(fc.u, fc.v, fc.mass[fc.live], draw)
            dmass[fc.live] = dm_live
            pc = fc.pc[fc.live]
            r = fp.cam_R[:, 2]
            z = pc[:, 2]
            dudh = fp.cam.fx * (r[0] * z - pc[:, 0] * r[2]) / z**2
            dvdh = fp.cam.fy * (r[1] * z - pc[:, 1] * r[2]) / z**2
            d[fc.live] += du * dudh + dv * dvdh
        dalpha = d[None, :] * fp.Z
        dalpha[fc.argmax, np.arange(fc.argmax.size)] += dmass
        dlogit = fc.alpha * (dalpha - (fc.alpha * dalpha).sum(axis=0)[None])
        dlogit[:, fp.dead] = 0.0
        grads_w += fp.bev_in.T @ dlogit.T
        grads_b += dlogit.sum(axis=1)
    return PredictorParams(grads_w, grads_b)


@dataclass
class TraceRow:
    step: int
    loss: float
    l_sa: float
    l_cons: float
    l_h: float


def train(config: TrainConfig, batch: Batch, init: Optional[PredictorParams] = None) -> tuple[PredictorParams, list]:
    """Full-batch gradient descent. Raises NumericalGuardError on divergence."""
    if not batch.frames:
        raise ValueError("empty training batch")
    C = batch.frames[0].bev_in.shape[1]
    A = batch.frames[0].Z.shape[0]
    params = init if init is not None else PredictorParams.zeros(C, A)
    params = PredictorParams(params.weight.copy(), params.bias.copy())
    trace: list[TraceRow] = []
    first = None
    for step in range(config.steps):
        loss, cache = forward_loss(params, batch, config.loss_weights, config.consistency_target)
        if not np.isfinite(loss):
            raise NumericalGuardError(f"non-finite loss at step {step}")
        if first is None:
            first = loss
        elif loss > 10 * first:
            raise NumericalGuardError(f"loss {loss:.4g} exceeds 10x initial {first:.4g} at step {step}")
        trace.append(TraceRow(step, loss, cache.l_sa, cache.l_cons, cache.l_h))
        if config.learning_rate == 0:
            continue
        g = backward(cache)
        params = PredictorParams(params.weight - config.learning_rate * g.weight,
                                 params.bias - config.learning_rate * g.bias)
        if step % 50 == 0:
            log.debug("step %d loss %.5f (sa %.4f cons %.4f h %.4f)", step, loss, cache.l_sa, cache.l_cons, cache.l_h)
    return params, trace


def trace_csv(trace: Sequence[TraceRow]) -> str:
    lines = ["step,loss,l_sa,l_cons,l_h"]
    lines += [f"{r.step},{r.loss!r},{r.l_sa!r},{r.l_cons!r},{r.l_h!r}" for r in trace]
    return "\n".join(lines) + "\n"
