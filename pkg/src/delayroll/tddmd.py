"""Time-delayed dynamic mode decomposition (TD-DMD).

The model predicts the next state as a linear combination of the previous
``n`` states::

    w_k = A_0 w_{k-n} + ... + A_{n-1} w_{k-1}

where the block row ``a_hat = [A_0 ... A_{n-1}]`` is the fitted part of the
companion operator. It is obtained in closed form from a pseudoinverse.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_bursts, check_window, check_windows
from .data import BurstDataset, Normalizer, Trajectory
from .exceptions import DivergenceError, NumericalError

__all__ = [
    "TDDMDModel",
    "TDDMD",
    "pseudoinverse",
    "fit_tddmd",
    "fit_dmd",
    "predict_next",
    "rollout_tddmd",
    "save_tddmd",
    "load_tddmd",
]


@dataclass(frozen=True)
class TDDMDModel:
    a_hat: np.ndarray
    n: int
    d: int
    rel_tol: float = 1e-10

    def __post_init__(self):
        a = np.array(self.a_hat, dtype=float)
        if a.shape != (self.d, self.n * self.d):
            raise ValueError(f"a_hat must have shape ({self.d}, {self.n * self.d}), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NumericalError("a_hat contains non-finite entries")
        a.setflags(write=False)
        object.__setattr__(self, "a_hat", a)

    @property
    def blocks(self) -> list:
        """``[A_0, ..., A_{n-1}]``, each ``(d, d)``; ``A_k`` multiplies the
        ``k``-th oldest window state."""
        d = self.d
        return [self.a_hat[:, k * d:(k + 1) * d] for k in range(self.n)]

    def companion(self) -> np.ndarray:
        """Full ``(nd, nd)`` operator: identity shift blocks above ``a_hat``."""
        nd = self.n * self.d
        A = np.zeros((nd, nd))
        A[:-self.d, self.d:] = np.eye(nd - self.d)
        A[-self.d:] = self.a_hat
        return A


def pseudoinverse(m, rel_tol: float = 1e-10) -> np.ndarray:
    """Moore-Penrose inverse via SVD.

    Singular values below ``rel_tol`` times the largest are treated as zero.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0:
        raise ValueError("cannot invert an empty matrix")
    if rel_tol < 0:
        raise ValueError(f"rel_tol must be >= 0, got {rel_tol}")
    try:
        U, s, Vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(m.T.shape)
    keep = s > rel_tol * s[0]
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (Vt.T * s_inv) @ U.T


def fit_tddmd(data, rel_tol: float = 1e-10) -> TDDMDModel:
    """Least-squares fit of ``a_hat`` from bursts.

    Columns of ``X`` are the stacked windows ``w_{0:n-1}``; the last block
    row of ``Y`` holds the targets ``w_n``. Only the last ``d`` rows of
    ``Y X^+`` are formed since the rows above are pure shift structure.
    """
    bursts = as_bursts(data)
    J, n1, d = bursts.shape
    n = n1 - 1
    X = bursts[:, :-1, :].reshape(J, n * d).T
    Y_last = bursts[:, -1, :].T
    a_hat = Y_last @ pseudoinverse(X, rel_tol)
    return TDDMDModel(a_hat=a_hat, n=n, d=d, rel_tol=rel_tol)


def fit_dmd(data, rel_tol: float = 1e-10) -> np.ndarray:
    """Plain DMD operator ``A = Y X^+`` from every within-burst transition."""
    bursts = as_bursts(data)
    d = bursts.shape[2]
    X = bursts[:, :-1, :].reshape(-1, d).T
    Y = bursts[:, 1:, :].reshape(-1, d).T
    return Y @ pseudoinverse(X, rel_tol)


def predict_next(model: TDDMDModel, window) -> np.ndarray:
    window = check_window(window, model.n, model.d)
    return model.a_hat @ window.reshape(-1)


def rollout_tddmd(
    model: TDDMDModel,
    initial_window,
    steps: int,
    normalizer: Optional[Normalizer] = None,
    dt: float = 1.0,
    t0: float = 0.0,
) -> Trajectory:
    """Autoregressive rollout; returns the window followed by ``steps``
    predictions.

    With a ``normalizer`` the window is given in native units, the rollout
    runs in normalized space and the output is mapped back.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    window = check_window(initial_window, model.n, model.d)
    if normalizer is not None:
        window = normalizer.normalize(window)
    n = model.n
    out = np.empty((n + steps, model.d))
    out[:n] = window
    for k in range(steps):
        with np.errstate(over="ignore", invalid="ignore"):
            nxt = model.a_hat @ out[k:k + n].reshape(-1)
        if not np.all(np.isfinite(nxt)):
            raise DivergenceError(f"TD-DMD rollout diverged at step {k + 1}", stage="rollout", step=k + 1)
        out[n + k] = nxt
    if normalizer is not None:
        out = normalizer.denormalize(out)
    return Trajectory(out, dt=dt, t0=t0, label="tddmd")


def save_tddmd(model: TDDMDModel, path, normalizer: Optional[Normalizer] = None):
    payload = {
        "n": model.n,
        "d": model.d,
        "a_hat": model.a_hat.tolist(),
        "normalizer": normalizer.to_dict() if normalizer is not None else None,
        "rel_tol": model.rel_tol,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_tddmd(path):
    """Return ``(model, normalizer)``; the normalizer may be ``None``."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    model = TDDMDModel(
        a_hat=np.array(payload["a_hat"]), n=payload["n"], d=payload["d"], rel_tol=payload["rel_tol"]
    )
    norm = payload.get("normalizer")
    return model, (Normalizer.from_dict(norm) if norm else None)


class TDDMD(RegressorMixin, BaseEstimator):
    """Time-delayed DMD as a scikit-learn style regressor.

    ``fit`` accepts a :class:`BurstDataset`, a ``(J, n+1, d)`` burst array,
    or windows ``(J, n, d)`` together with targets ``y`` of shape ``(J, d)``.
    ``predict`` maps windows ``(m, n, d)`` to next states ``(m, d)``.

    Parameters
    ----------
    n : int
        Delay length.
    rel_tol : float
        Relative singular-value cutoff of the pseudoinverse.

    Attributes
    ----------
    model_ : TDDMDModel
    a_hat_ : ndarray of shape (d, n*d)
    """

    def __init__(self, n=2, rel_tol=1e-10):
        self.n = n
        self.rel_tol = rel_tol

    def fit(self, X, y=None):
        bursts = as_bursts(X, y)
        if bursts.shape[1] - 1 != self.n:
            raise ValueError(f"bursts have n={bursts.shape[1] - 1}, estimator expects n={self.n}")
        self.model_ = fit_tddmd(bursts, self.rel_tol)
        self.a_hat_ = self.model_.a_hat
        self.n_features_in_ = self.model_.d
        return self

    def predict(self, X):
        check_is_fitted(self)
        windows = check_windows(X, self.n, self.model_.d)
        return windows.reshape(windows.shape[0], -1) @ self.a_hat_.T

    def rollout(self, initial_window, steps, normalizer=None, dt=1.0, t0=0.0):
        check_is_fitted(self)
        return rollout_tddmd(self.model_, initial_window, steps, normalizer, dt=dt, t0=t0)
