"""Fixed toy benchmark: uniform weights vs trained weights, with and without the consistency loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .heightgrid import HeightMap
from .losses import LossWeights
from .metrics import mae
from .synth import RigConfig, SceneSpec, generate_scene
from .toytrain import PredictorParams, TrainConfig, merge_batches, predict_heightmap, prepare_scene, train

SCENE_LENGTH = 12
TRAIN_FRAMES = 4


def benchmark_specs() -> list[SceneSpec]:
    grades = [-0.08, -0.05, -0.03, 0.03, 0.05, 0.08]
    specs = [SceneSpec("grade", {"grade": g}, seed=i, length=SCENE_LENGTH) for i, g in enumerate(grades)]
    specs.append(SceneSpec("composite", {"grade": 0.03, "amplitude": 0.4, "wavelength": 80.0}, seed=6, length=SCENE_LENGTH))
    specs.append(SceneSpec("composite", {"grade": -0.03, "amplitude": 0.4, "wavelength": 80.0}, seed=7, length=SCENE_LENGTH))
    return specs


@dataclass(frozen=True)
class VariantResult:
    name: str
    per_frame_mae: np.ndarray  # (scenes, held-out frames)
    trace: list

    @property
    def mae(self) -> float:
        return float(self.per_frame_mae.mean())

    @property
    def frame_std(self) -> float:
        """Mean over scenes of the std of per-frame MAE along the sequence."""
        return float(self.per_frame_mae.std(axis=1).mean())


def held_out_mae(params: PredictorParams, batches) -> np.ndarray:
    rows = []
    for b in batches:
        rows.append([mae(predict_heightmap(params, fp), HeightMap(fp.grid, fp.gt.reshape(fp.grid.shape))) for fp in b.frames])
    return np.array(rows)


def run_ablation(learning_rate: float = 0.05, steps: int = 200, rig: RigConfig = RigConfig()) -> dict:
    scenes = [generate_scene(s, rig) for s in benchmark_specs()]
    train_batch = merge_batches([prepare_scene(s, frames=range(TRAIN_FRAMES)) for s in scenes])
    test = [prepare_scene(s, frames=range(TRAIN_FRAMES, SCENE_LENGTH)) for s in scenes]
    C, A = rig.channels, len(rig.slopes)
    out = {"uniform": VariantResult("uniform", held_out_mae(PredictorParams.zeros(C, A), test), [])}
    for name, lam_cons in (("saa", 0.0), ("saa+cons", 2.0)):
        cfg = TrainConfig(learning_rate, steps, TRAIN_FRAMES, LossWeights(5.0, lam_cons, 10.0))
        params, trace = train(cfg, train_batch)
        out[name] = VariantResult(name, held_out_mae(params, test), trace)
    return out
