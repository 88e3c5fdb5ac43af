"""Input validation helpers shared by the estimators."""

import numpy as np

from .data import BurstDataset


def as_bursts(X, y=None) -> np.ndarray:
    """Coerce estimator input to a finite ``(J, n+1, d)`` burst array.

    Accepts a BurstDataset, a 3-D burst array, or 3-D windows with 2-D
    targets ``y``.
    """
    if isinstance(X, BurstDataset):
        if y is not None:
            raise ValueError("y must be None when X is a BurstDataset")
        bursts = X.bursts
    else:
        X = np.asarray(X, dtype=float)
        if X.ndim != 3:
            raise ValueError(f"expected a 3-D array (J, n+1, d) or windows (J, n, d), got shape {X.shape}")
        if y is None:
            bursts = X
        else:
            y = np.asarray(y, dtype=float)
            if y.ndim == 1 and X.shape[2] == 1:
                y = y[:, None]
            if y.shape != (X.shape[0], X.shape[2]):
                raise ValueError(f"y must have shape {(X.shape[0], X.shape[2])}, got {y.shape}")
            bursts = np.concatenate([X, y[:, None, :]], axis=1)
    if bursts.shape[0] < 1 or bursts.shape[1] < 2 or bursts.shape[2] < 1:
        raise ValueError(f"need J >= 1 bursts of n+1 >= 2 states, got shape {bursts.shape}")
    if not np.all(np.isfinite(bursts)):
        raise ValueError("bursts contain non-finite values")
    return bursts


def check_window(window, n, d) -> np.ndarray:
    """Validate one ``(n, d)`` window; 1-D input is accepted when ``d == 1``."""
    w = np.asarray(window, dtype=float)
    if w.ndim == 1 and d == 1:
        w = w[:, None]
    if w.shape != (n, d):
        raise ValueError(f"window must have shape ({n}, {d}), got {w.shape}")
    return w


def check_windows(X, n, d) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 2 and d == 1:
        X = X[:, :, None]
    if X.ndim != 3 or X.shape[1:] != (n, d):
        raise ValueError(f"windows must have shape (m, {n}, {d}), got {X.shape}")
    return X
