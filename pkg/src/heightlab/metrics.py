"""Road-height evaluation: MAE, RMSE and threshold accuracy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .heightgrid import HeightMap

DEFAULT_THRESHOLDS = (0.05, 0.1, 0.2)


def abs_errors(pred: HeightMap, gt: HeightMap) -> np.ndarray:
    """Absolute errors over the jointly valid cells (row-major order)."""
    if pred.grid.shape != gt.grid.shape:
        raise ValueError(f"grid mismatch: {pred.grid.shape} vs {gt.grid.shape}")
    sel = pred.valid & gt.valid
    if not sel.any():
        raise ValueError("no jointly valid cell to evaluate")
    return np.abs(pred.values[sel] - gt.values[sel])


def _mae(err: np.ndarray) -> float:
    return float(err.mean())


def _rmse(err: np.ndarray) -> float:
    return float(np.sqrt((err * err).mean()))


def _acc(err: np.ndarray, t: float) -> float:
    if not t > 0:
        raise ValueError("threshold must be positive")
    return float((err < t).mean())


def mae(pred: HeightMap, gt: HeightMap) -> float:
    return _mae(abs_errors(pred, gt))


def rmse(pred: HeightMap, gt: HeightMap) -> float:
    return _rmse(abs_errors(pred, gt))


def acc_at(pred: HeightMap, gt: HeightMap, t: float) -> float:
    """Fraction of jointly valid cells with ``|error| < t`` (strict)."""
    return _acc(abs_errors(pred, gt), t)


@dataclass(frozen=True)
class HeightReport:
    mae: float
    rmse: float
    acc: dict = field(default_factory=dict)
    n_cells: int = 0

    def csv_header(self) -> str:
        return ",".join(["mae", "rmse", *(f"acc@{t:g}" for t in self.acc), "n_cells"])

    def csv_row(self) -> str:
        vals = [f"{self.mae:.6f}", f"{self.rmse:.6f}", *(f"{a:.6f}" for a in self.acc.values()), str(self.n_cells)]
        return ",".join(vals)

    def table(self, label: str = "") -> str:
        accs = list(self.acc.items())
        head = f"{'':<12}| {'MAE':>7} {'RMSE':>7} | " + " ".join(f"{'@' + format(t, 'g'):>7}" for t, _ in accs)
        row = f"{label:<12}| {self.mae:7.3f} {self.rmse:7.3f} | " + " ".join(f"{a:7.3f}" for _, a in accs)
        return head + "\n" + row


def evaluate(pred: HeightMap, gt: HeightMap, thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> HeightReport:
    err = abs_errors(pred, gt)
    return HeightReport(
        mae=_mae(err),
        rmse=_rmse(err),
        acc={float(t): _acc(err, t) for t in thresholds},
        n_cells=int(err.size),
    )


def pooled(pairs: Iterable[tuple[HeightMap, HeightMap]], thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> HeightReport:
    """One report over all jointly valid cells of every frame."""
    err = np.concatenate([abs_errors(p, g) for p, g in pairs])
    return HeightReport(_mae(err), _rmse(err), {float(t): _acc(err, t) for t in thresholds}, int(err.size))


def frame_average(reports: Sequence[HeightReport]) -> HeightReport:
    """Unweighted mean of per-frame reports."""
    if not reports:
        raise ValueError("no reports to average")
    ts = list(reports[0].acc)
    return HeightReport(
        mae=float(np.mean([r.mae for r in reports])),
        rmse=float(np.mean([r.rmse for r in reports])),
        acc={t: float(np.mean([r.acc[t] for r in reports])) for t in ts},
        n_cells=int(sum(r.n_cells for r in reports)),
    )
