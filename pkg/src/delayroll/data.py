"""Trajectory containers, subsampling, burst sampling and hypercube scaling."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ParseError

__all__ = [
    "Trajectory",
    "BurstDataset",
    "Normalizer",
    "HypercubeScaler",
    "subsample",
    "fit_normalizer",
    "normalize",
    "denormalize",
    "normalize_trajectory",
    "denormalize_trajectory",
    "sample_bursts",
    "write_trajectory_csv",
    "read_trajectory_csv",
]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled sequence of ``d``-dimensional states.

    ``states`` is stored as a read-only ``(K + 1, d)`` array; 1-D input is
    promoted to a single column.
    """

    states: np.ndarray
    dt: float
    t0: float = 0.0
    label: Optional[str] = None

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if states.ndim != 2 or states.shape[0] < 1 or states.shape[1] < 1:
            raise ValueError(
                f"states must have shape (K+1, d) with K+1 >= 1 and d >= 1, got {states.shape}"
            )
        if not np.all(np.isfinite(states)):
            raise ValueError("states contain non-finite values")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be > 0, got {self.dt}")
        object.__setattr__(self, "states", _frozen(states))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))

    def __len__(self):
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def duration(self) -> float:
        return (len(self) - 1) * self.dt


@dataclass(frozen=True)
class BurstDataset:
    """``J`` bursts of ``n + 1`` consecutive states, stored as ``(J, n+1, d)``.

    ``sources`` optionally records ``(trajectory index, start index)`` per
    burst.
    """

    bursts: np.ndarray
    sources: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        bursts = np.asarray(self.bursts, dtype=float)
        if bursts.ndim != 3 or bursts.shape[0] < 1 or bursts.shape[1] < 2:
            raise ValueError(
                f"bursts must have shape (J, n+1, d) with J >= 1 and n >= 1, got {bursts.shape}"
            )
        object.__setattr__(self, "bursts", _frozen(bursts))
        if self.sources is not None:
            object.__setattr__(self, "sources", np.asarray(self.sources, dtype=int))

    @property
    def J(self) -> int:
        return self.bursts.shape[0]

    @property
    def n(self) -> int:
        return self.bursts.shape[1] - 1

    @property
    def d(self) -> int:
        return self.bursts.shape[2]

    @property
    def windows(self) -> np.ndarray:
        """First ``n`` states of every burst, ``(J, n, d)``."""
        return self.bursts[:, :-1, :]

    @property
    def targets(self) -> np.ndarray:
        """Last state of every burst, ``(J, d)``."""
        return self.bursts[:, -1, :]


@dataclass(frozen=True)
class Normalizer:
    """Per-component affine map of ``[lo, hi]`` onto ``[-1, 1]``.

    Components with ``hi == lo`` carry no information; they map to 0 and
    invert to ``lo``.
    """

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError(f"lo and hi must be vectors of equal length, got {lo.shape}, {hi.shape}")
        if np.any(hi < lo):
            raise ValueError("hi must be >= lo componentwise")
        object.__setattr__(self, "lo", _frozen(lo))
        object.__setattr__(self, "hi", _frozen(hi))

    @property
    def d(self) -> int:
        return self.lo.shape[0]

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.d:
            raise ValueError(f"expected trailing dimension {self.d}, got shape {x.shape}")
        return x

    def normalize(self, x):
        x = self._check(x)
        span = self.hi - self.lo
        live = span > 0
        safe = np.where(live, span, 1.0)
        return np.where(live, 2.0 * (x - self.lo) / safe - 1.0, 0.0)

    def denormalize(self, y):
        y = self._check(y)
        span = self.hi - self.lo
        return np.where(span > 0, self.lo + 0.5 * (y + 1.0) * span, self.lo)

    def to_dict(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, payload):
        return cls(lo=payload["lo"], hi=payload["hi"])


def subsample(traj: Trajectory, tau: int) -> Trajectory:
    """Keep every ``tau``-th state, anchored at index 0."""
    if int(tau) != tau or tau < 1:
        raise ValueError(f"tau must be a positive integer, got {tau}")
    tau = int(tau)
    return Trajectory(traj.states[::tau], dt=traj.dt * tau, t0=traj.t0, label=traj.label)


def fit_normalizer(trajs: Sequence[Trajectory]) -> Normalizer:
    """Componentwise extrema over every state of every trajectory."""
    trajs = list(trajs)
    if not trajs:
        raise ValueError("fit_normalizer needs at least one trajectory")
    d = {t.d for t in trajs}
    if len(d) != 1:
        raise ValueError(f"trajectories have mixed dimensions {sorted(d)}")
    stacked = np.concatenate([t.states for t in trajs], axis=0)
    return Normalizer(lo=stacked.min(axis=0), hi=stacked.max(axis=0))


def normalize(norm: Normalizer, x):
    return norm.normalize(x)


def denormalize(norm: Normalizer, y):
    return norm.denormalize(y)


def normalize_trajectory(norm: Normalizer, traj: Trajectory) -> Trajectory:
    return Trajectory(norm.normalize(traj.states), dt=traj.dt, t0=traj.t0, label=traj.label)


def denormalize_trajectory(norm: Normalizer, traj: Trajectory) -> Trajectory:
    return Trajectory(norm.denormalize(traj.states), dt=traj.dt, t0=traj.t0, label=traj.label)


def sample_bursts(trajs: Sequence[Trajectory], n: int, J: int, rng) -> BurstDataset:
    """Draw ``J`` bursts of ``n + 1`` consecutive states with replacement.

    Each draw picks a trajectory uniformly among those with at least
    ``n + 1`` states, then a start index uniformly among its valid starts.
    Bursts may overlap.

    Parameters
    ----------
    trajs : sequence of Trajectory
    n : int
        Delay length.
    J : int
        Number of bursts.
    rng : numpy.random.Generator or int
        Random source; an int is used as a seed.
    """
    if n < 1 or J < 1:
        raise ValueError(f"n and J must be positive, got n={n}, J={J}")
    rng = np.random.default_rng(rng)
    trajs = list(trajs)
    usable = [i for i, t in enumerate(trajs) if len(t) >= n + 1]
    if not usable:
        raise ValueError(f"no trajectory has at least n+1={n + 1} states")
    picks = rng.integers(0, len(usable), size=J)
    sources = np.empty((J, 2), dtype=int)
    bursts = np.empty((J, n + 1, trajs[usable[0]].d))
    for j, p in enumerate(picks):
        i = usable[p]
        start = rng.integers(0, len(trajs[i]) - n)
        sources[j] = (i, start)
        bursts[j] = trajs[i].states[start:start + n + 1]
    return BurstDataset(bursts, sources=sources)


class HypercubeScaler(TransformerMixin, BaseEstimator):
    """Scale each feature to ``[-1, 1]`` using its training min and max.

    Unlike :class:`sklearn.preprocessing.MinMaxScaler`, constant features map
    to 0 and are inverted back to their constant value; no clipping is
    applied to out-of-range inputs.

    Attributes
    ----------
    normalizer_ : Normalizer
    """

    def fit(self, X, y=None):
        X = check_array(X)
        self.normalizer_ = Normalizer(lo=X.min(axis=0), hi=X.max(axis=0))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        return self.normalizer_.normalize(check_array(X))

    def inverse_transform(self, X):
        check_is_fitted(self)
        return self.normalizer_.denormalize(check_array(X))


# ---------------------------------------------------------------- CSV I/O


def _manifest_path(path: Path) -> Path:
    return path.with_suffix(".json")


def write_trajectory_csv(traj: Trajectory, path, manifest: bool = True) -> Path:
    """Write ``t,w0,...,w{d-1}`` rows plus a sidecar JSON manifest."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"w{i}" for i in range(traj.d)])
        for t, row in zip(traj.times, traj.states):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    if manifest:
        _manifest_path(path).write_text(
            json.dumps({"label": traj.label, "dt": traj.dt, "t0": traj.t0}, indent=2) + "\n",
            encoding="utf-8",
        )
    return path


def read_trajectory_csv(path) -> Trajectory:
    """Parse one trajectory file; metadata comes from the sidecar manifest
    when present, otherwise from the ``t`` column and the file stem."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if not header or header[0] != "t":
            raise ParseError(f"{path}: missing 't' column in header (got {header})")
        expected = ["t"] + [f"w{i}" for i in range(len(header) - 1)]
        if len(header) < 2:
            raise ParseError(f"{path}: header needs at least one column 'w0'")
        for got, want in zip(header, expected):
            if got != want:
                raise ParseError(f"{path}: expected column '{want}', got '{got}'")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                bad = next(i for i, c in enumerate(row) if not _is_float(c))
                raise ParseError(
                    f"{path}:{lineno}: non-numeric cell {row[bad]!r} in column '{header[bad]}'"
                ) from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    data = np.array(rows)
    times, states = data[:, 0], data[:, 1:]
    meta = {}
    mpath = _manifest_path(path)
    if mpath.exists():
        meta = json.loads(mpath.read_text(encoding="utf-8"))
    dt = meta.get("dt")
    if dt is None:
        if len(times) < 2:
            raise ParseError(f"{path}: cannot infer dt from a single row without a manifest")
        dt = float(times[1] - times[0])
    t0 = meta.get("t0", float(times[0]))
    label = meta.get("label", path.stem)
    return Trajectory(states, dt=dt, t0=t0, label=label)


def _is_float(s):
    try:
        float(s)
    except ValueError:
        return False
    return True
