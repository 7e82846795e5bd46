"""Shared test utilities (imported by several test modules)."""

import numpy as np

from heightlab.losses import LossWeights
from heightlab.synth import RigConfig, SceneSpec, generate_scene
from heightlab.toytrain import PredictorParams, backward, forward_loss, prepare_scene

FD_RIG = RigConfig(width=64, height=48, fx=48.0, fy=48.0, cx=31.5, cy=23.5, rows=40, cols=16,
                   meters_per_pixel=1.0, x_min=-8.0, channels=4)


def fd_relative_error(seed: int, weights: LossWeights = LossWeights(), step: float = 1e-5, target: str = "pred"):
    """Worst elementwise relative error of backward() against central differences."""
    scene = generate_scene(SceneSpec("composite", {"grade": 0.05, "amplitude": 0.4, "wavelength": 60.0},
                                     seed=seed, length=3), FD_RIG)
    batch = prepare_scene(scene)
    C, A = FD_RIG.channels, len(FD_RIG.slopes)
    rng = np.random.default_rng(seed)
    params = PredictorParams(rng.normal(size=(C, A)), rng.normal(size=A))
    _, cache = forward_loss(params, batch, weights, target)
    analytic = backward(cache).flat()
    x = params.flat()
    numeric = np.empty_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        lp = forward_loss(PredictorParams.from_flat(xp, C, A), batch, weights, target)[0]
        lm = forward_loss(PredictorParams.from_flat(xm, C, A), batch, weights, target)[0]
        numeric[i] = (lp - lm) / (2 * step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max()), cache


def brute_force_metrics(pred, gt, thresholds):
    """Loop oracle over every cell, independent of the vectorized code."""
    errs = []
    for p, g in zip(pred.ravel().tolist(), gt.ravel().tolist()):
        if p == p and g == g:  # both non-NaN
            errs.append(abs(p - g))
    n = len(errs)
    mae = sum(errs) / n
    rmse = (sum(e * e for e in errs) / n) ** 0.5
    acc = {t: sum(1 for e in errs if e < t) / n for t in thresholds}
    return mae, rmse, acc
