"""Forecast error and attractor statistics."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import Trajectory

__all__ = [
    "rmse",
    "max_abs_error",
    "lobe_switches",
    "peak_stats",
    "extremum_error",
    "amplitude_ratio",
    "TrajectoryMetrics",
    "MetricsReport",
    "evaluate",
]


def _states(x):
    if isinstance(x, Trajectory):
        return x.states
    a = np.asarray(x, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _series(x):
    """1-D values and sampling interval of a scalar series."""
    if isinstance(x, Trajectory):
        if x.d != 1:
            raise ValueError(f"expected a 1-D trajectory, got d={x.d}")
        return x.states[:, 0], x.dt
    return np.asarray(x, dtype=float).ravel(), 1.0


def _paired(pred, truth):
    p, t = _states(pred), _states(truth)
    if p.shape != t.shape:
        raise ValueError(f"prediction shape {p.shape} does not match truth shape {t.shape}")
    return p, t


def rmse(pred, truth) -> float:
    """Root of the time-mean squared Euclidean error."""
    p, t = _paired(pred, truth)
    return float(np.sqrt(np.mean(np.sum((p - t) ** 2, axis=1))))


def max_abs_error(pred, truth) -> float:
    p, t = _paired(pred, truth)
    return float(np.max(np.abs(p - t)))


def lobe_switches(x, threshold: float = 0.1):
    """Count sign changes between lobes, ignoring samples with
    ``|x| <= threshold``.

    Returns
    -------
    count : int
    frequency : float
        ``count`` divided by the series duration ``(len - 1) * dt``.
    """
    if not threshold > 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    values, dt = _series(x)
    if values.size == 0:
        raise ValueError("empty series")
    signs = np.sign(values[np.abs(values) > threshold])
    if signs.size == 0:
        return 0, 0.0
    count = int(np.count_nonzero(signs[1:] != signs[:-1]))
    duration = (values.size - 1) * dt
    return count, (count / duration if duration > 0 else 0.0)


def peak_stats(x):
    """Strict interior local maxima and the mean time between them.

    Flat tops are not peaks. The interval is 0 with fewer than two peaks.
    """
    values, dt = _series(x)
    if values.size < 3:
        raise ValueError(f"need at least 3 samples, got {values.size}")
    mid = values[1:-1]
    idx = np.flatnonzero((mid > values[:-2]) & (mid > values[2:])) + 1
    interval = float(np.mean(np.diff(idx)) * dt) if idx.size >= 2 else 0.0
    return int(idx.size), interval


def extremum_error(pred, truth):
    """Gap between minima and shift between their times (first occurrence)."""
    p, dt = _series(pred)
    t, _ = _series(truth)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} vs {t.size}")
    return float(p.min() - t.min()), float((np.argmin(p) - np.argmin(t)) * dt)


def amplitude_ratio(pred, truth, tail: float = 1 / 3) -> np.ndarray:
    """Per-component ratio of oscillation amplitudes (standard deviation)
    over the trailing ``tail`` fraction of the horizon."""
    p, t = _paired(pred, truth)
    start = p.shape[0] - max(2, int(round(tail * p.shape[0])))
    amp_t = t[start:].std(axis=0)
    if np.any(amp_t == 0):
        raise ValueError("truth has a constant component over the tail window")
    return p[start:].std(axis=0) / amp_t


@dataclass
class TrajectoryMetrics:
    rmse: Optional[float]
    max_abs_error: Optional[float]
    lobe_switches: int
    switch_frequency: float
    peak_count: int
    mean_peak_interval: float


@dataclass
class MetricsReport:
    """Per-trajectory metrics plus mean/std aggregates over trajectories.

    Trajectories with fewer than two peaks have no defined peak interval and
    are left out of its aggregate; their number is ``interval_excluded``.
    """

    model: str
    per_trajectory: list = field(default_factory=list)
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    interval_excluded: int = 0

    @classmethod
    def from_metrics(cls, model, rows: Sequence[TrajectoryMetrics]):
        rows = list(rows)
        report = cls(model=model, per_trajectory=rows)
        for key in ("rmse", "max_abs_error", "lobe_switches", "switch_frequency", "peak_count"):
            vals = [getattr(r, key) for r in rows if getattr(r, key) is not None]
            if vals:
                report.mean[key] = float(np.mean(vals))
                report.std[key] = float(np.std(vals))
        usable = [r.mean_peak_interval for r in rows if r.peak_count >= 2]
        report.interval_excluded = len(rows) - len(usable)
        if usable:
            report.mean["mean_peak_interval"] = float(np.mean(usable))
            report.std["mean_peak_interval"] = float(np.std(usable))
        return report

    def to_dict(self):
        return {
            "model": self.model,
            "mean": self.mean,
            "std": self.std,
            "interval_excluded": self.interval_excluded,
            "per_trajectory": [asdict(r) for r in self.per_trajectory],
        }

    @classmethod
    def from_dict(cls, payload):
        rows = [TrajectoryMetrics(**r) for r in payload["per_trajectory"]]
        return cls(
            model=payload["model"],
            per_trajectory=rows,
            mean=payload["mean"],
            std=payload["std"],
            interval_excluded=payload["interval_excluded"],
        )

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def write_csv(self, path):
        names = [f.name for f in TrajectoryMetrics.__dataclass_fields__.values()]
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "trajectory"] + names)
            for i, r in enumerate(self.per_trajectory):
                writer.writerow([self.model, i] + [getattr(r, k) for k in names])


def evaluate(model, preds, truths=None, component: int = 0, threshold: float = 0.1) -> MetricsReport:
    """Metrics for a set of predicted trajectories.

    ``truths`` may be omitted to compute attractor statistics of the ground
    truth itself. Lobe and peak statistics use ``component``.
    """
    rows = []
    truths = [None] * len(preds) if truths is None else list(truths)
    if len(truths) != len(preds):
        raise ValueError(f"{len(preds)} predictions but {len(truths)} truths")
    for pred, truth in zip(preds, truths):
        comp = Trajectory(pred.states[:, component], dt=pred.dt, t0=pred.t0)
        switches, freq = lobe_switches(comp, threshold)
        peaks, interval = peak_stats(comp)
        rows.append(TrajectoryMetrics(
            rmse=rmse(pred, truth) if truth is not None else None,
            max_abs_error=max_abs_error(pred, truth) if truth is not None else None,
            lobe_switches=switches,
            switch_frequency=freq,
            peak_count=peaks,
            mean_peak_interval=interval,
        ))
    return MetricsReport.from_metrics(model, rows)
