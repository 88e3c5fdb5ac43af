"""Time-delayed transformer (TD-TF).

A single shared feedforward map lifts every state of the delay window, one
attention query (the last lifted state) weighs the lifted states, and the
weighted sum of their value projections is added to the last raw state::

    y_k = [w_k; k/n]                       (optional positional index)
    z_k = W sigma(U y_k + b)
    s_k = <z_{n-1}, B z_k>,  alpha = softmax(s)
    w_n = w_{n-1} + sum_k alpha_k V z_k

Training minimizes the mean squared one-step error with AdamW using exact
reverse-mode gradients. Everything runs in float64 numpy.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import erf
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_bursts, check_window, check_windows
from .data import Normalizer, Trajectory
from .exceptions import DivergenceError, NumericalError

logger = logging.getLogger(__name__)

__all__ = [
    "TDTFConfig",
    "TDTFParams",
    "TrainConfig",
    "TDTF",
    "init_params",
    "positional_encode",
    "feedforward",
    "attention",
    "attention_weights",
    "forward",
    "forward_batch",
    "loss",
    "gradients",
    "adamw_step",
    "train",
    "rollout_tdtf",
    "rollout_tdtf_batch",
    "save_tdtf",
    "load_tdtf",
]

PARAM_NAMES = ("U", "b", "W", "B", "V")


@dataclass(frozen=True)
class TDTFConfig:
    n: int
    d: int
    h: int = 10
    pos_enc: bool = True
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        for name in ("n", "d", "h"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {sorted(_ACTIVATIONS)}, got {self.activation!r}")

    @property
    def d_in(self) -> int:
        return self.d + 1 if self.pos_enc else self.d

    @property
    def n_params(self) -> int:
        h, di, d = self.h, self.d_in, self.d
        return h * di + h + di * h + di * di + d * di


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-2
    batch_size: int = 100
    epochs: int = 500
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if not self.eps_adam > 0:
            raise ValueError(f"eps_adam must be > 0, got {self.eps_adam}")


@dataclass
class TDTFParams:
    """Learnable arrays. Shapes: ``U (h, d_in)``, ``b (h,)``,
    ``W (d_in, h)``, ``B (d_in, d_in)``, ``V (d, d_in)``."""

    U: np.ndarray
    b: np.ndarray
    W: np.ndarray
    B: np.ndarray
    V: np.ndarray

    def items(self):
        return ((name, getattr(self, name)) for name in PARAM_NAMES)

    def copy(self) -> "TDTFParams":
        return TDTFParams(**{k: v.copy() for k, v in self.items()})

    @property
    def size(self) -> int:
        return sum(v.size for _, v in self.items())

    def check(self, cfg: TDTFConfig):
        h, di, d = cfg.h, cfg.d_in, cfg.d
        want = {"U": (h, di), "b": (h,), "W": (di, h), "B": (di, di), "V": (d, di)}
        for name, arr in self.items():
            if arr.shape != want[name]:
                raise ValueError(f"parameter {name} has shape {arr.shape}, expected {want[name]}")
            if not np.all(np.isfinite(arr)):
                raise NumericalError(f"parameter {name} has non-finite entries")

    def to_dict(self):
        return {k: v.tolist() for k, v in self.items()}

    @classmethod
    def from_dict(cls, payload):
        return cls(**{k: np.array(payload[k], dtype=float) for k in PARAM_NAMES})


def init_params(cfg: TDTFConfig) -> TDTFParams:
    """Uniform ``(-1/sqrt(fan_in), 1/sqrt(fan_in))`` weights, zero bias."""
    rng = np.random.default_rng(cfg.seed)
    h, di, d = cfg.h, cfg.d_in, cfg.d

    def uni(shape, fan_in):
        s = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-s, s, size=shape)

    return TDTFParams(U=uni((h, di), di), b=np.zeros(h), W=uni((di, h), h), B=uni((di, di), di), V=uni((d, di), di))


# ------------------------------------------------------------- activations

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def _gelu_grad(x):
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


_ACTIVATIONS = {
    "tanh": (np.tanh, lambda x: 1.0 - np.tanh(x) ** 2),
    "relu": (lambda x: np.maximum(x, 0.0), lambda x: (x > 0).astype(float)),
    "gelu": (_gelu, _gelu_grad),
}


# -------------------------------------------------------- single window


def positional_encode(w, k: int, n: int) -> np.ndarray:
    """Append the relative index ``k / n`` to a state."""
    if not 0 <= k < n:
        raise ValueError(f"position k={k} outside [0, {n - 1}]")
    return np.append(np.asarray(w, dtype=float), k / n)


def feedforward(y, params: TDTFParams, activation: str = "tanh") -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (params.U.shape[1],):
        raise ValueError(f"input must have shape ({params.U.shape[1]},), got {y.shape}")
    act = _ACTIVATIONS[activation][0]
    return params.W @ act(params.U @ y + params.b)


def _scores(query, keys, B):
    """Query-key scores ``<query, B key_k>`` for every key row."""
    return keys @ (B.T @ query)


def _softmax(s, axis=-1):
    e = np.exp(s - np.max(s, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def attention_weights(z_list, B) -> np.ndarray:
    Z = np.asarray(z_list, dtype=float)
    s = _scores(Z[-1], Z, B)
    if not np.all(np.isfinite(s)):
        raise NumericalError("non-finite attention score")
    return _softmax(s)


def attention(z_list, B, V) -> np.ndarray:
    """Single-query attention: the last vector queries all ``n`` vectors."""
    Z = np.asarray(z_list, dtype=float)
    if Z.ndim != 2 or Z.shape[0] < 1:
        raise ValueError(f"expected n >= 1 vectors, got shape {Z.shape}")
    if B.shape != (Z.shape[1], Z.shape[1]) or V.shape[1] != Z.shape[1]:
        raise ValueError("B or V shape does not match the input dimension")
    alpha = attention_weights(Z, B)
    return alpha @ (Z @ V.T)


def forward(cfg: TDTFConfig, params: TDTFParams, window) -> np.ndarray:
    """Predict the state following one ``(n, d)`` window."""
    window = check_window(window, cfg.n, cfg.d)
    z = []
    for k in range(cfg.n):
        y = positional_encode(window[k], k, cfg.n) if cfg.pos_enc else window[k]
        z.append(feedforward(y, params, cfg.activation))
    return window[-1] + attention(z, params.B, params.V)


# ------------------------------------------------------------- batched


def _encode_batch(cfg, windows):
    if not cfg.pos_enc:
        return windows
    m, n, _ = windows.shape
    pos = np.broadcast_to((np.arange(n) / n)[None, :, None], (m, n, 1))
    return np.concatenate([windows, pos], axis=2)


def _forward_cache(cfg, params, windows):
    act = _ACTIVATIONS[cfg.activation][0]
    Y = _encode_batch(cfg, windows)                      # (m, n, d_in)
    A = Y @ params.U.T + params.b                        # (m, n, h)
    H = act(A)
    Z = H @ params.W.T                                   # (m, n, d_in)
    q = Z[:, -1, :]
    BZ = Z @ params.B.T                                  # rows B z_k
    s = np.einsum("mi,mki->mk", q, BZ)
    if not np.all(np.isfinite(s)):
        raise NumericalError("non-finite attention score")
    alpha = _softmax(s, axis=1)
    VZ = Z @ params.V.T                                  # (m, n, d)
    out = windows[:, -1, :] + np.einsum("mk,mkd->md", alpha, VZ)
    return out, (Y, A, H, Z, q, BZ, alpha, VZ)


def forward_batch(cfg: TDTFConfig, params: TDTFParams, windows) -> np.ndarray:
    """Vectorized :func:`forward` over windows ``(m, n, d)``."""
    windows = check_windows(windows, cfg.n, cfg.d)
    return _forward_cache(cfg, params, windows)[0]


def _split(cfg, batch):
    bursts = as_bursts(batch)
    if bursts.shape[1:] != (cfg.n + 1, cfg.d):
        raise ValueError(f"bursts must have shape (J, {cfg.n + 1}, {cfg.d}), got {bursts.shape}")
    return bursts[:, :-1, :], bursts[:, -1, :]


def loss(cfg: TDTFConfig, params: TDTFParams, batch) -> float:
    """Mean over bursts of the squared one-step prediction error."""
    windows, targets = _split(cfg, batch)
    out = _forward_cache(cfg, params, windows)[0]
    return float(np.mean(np.sum((out - targets) ** 2, axis=1)))


def _loss_and_grads(cfg, params, windows, targets):
    out, (Y, A, H, Z, q, BZ, alpha, VZ) = _forward_cache(cfg, params, windows)
    m = windows.shape[0]
    err = out - targets
    value = float(np.mean(np.sum(err ** 2, axis=1)))
    g_out = (2.0 / m) * err                                        # (m, d)

    gV = np.einsum("md,mk,mki->di", g_out, alpha, Z)
    g_alpha = np.einsum("md,mkd->mk", g_out, VZ)
    g_s = alpha * (g_alpha - np.sum(alpha * g_alpha, axis=1, keepdims=True))
    gB = np.einsum("mk,mi,mkj->ij", g_s, q, Z)

    # value path, key path, then the query path into the last position
    gZ = alpha[:, :, None] * (g_out @ params.V)[:, None, :]
    gZ += g_s[:, :, None] * (q @ params.B)[:, None, :]
    gZ[:, -1, :] += np.einsum("mk,mki->mi", g_s, BZ)

    gW = np.einsum("mki,mkh->ih", gZ, H)
    gA = (gZ @ params.W) * _ACTIVATIONS[cfg.activation][1](A)
    gU = np.einsum("mkh,mki->hi", gA, Y)
    gb = gA.sum(axis=(0, 1))
    return value, TDTFParams(U=gU, b=gb, W=gW, B=gB, V=gV)


def gradients(cfg: TDTFConfig, params: TDTFParams, batch) -> TDTFParams:
    """Exact gradient of :func:`loss` with respect to every parameter."""
    windows, targets = _split(cfg, batch)
    grads = _loss_and_grads(cfg, params, windows, targets)[1]
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name}")
    return grads


# ------------------------------------------------------------- training


def adamw_step(params: TDTFParams, grads: TDTFParams, opt_state: Optional[dict], train_cfg: TrainConfig, step_index: int):
    """One AdamW update with bias-corrected moments and decoupled decay.

    ``opt_state`` maps parameter names to ``(m, v)`` moment pairs; pass
    ``None`` on the first step. Returns new params and state; inputs are not
    modified.
    """
    if step_index < 1:
        raise ValueError(f"step_index must be >= 1, got {step_index}")
    b1, b2 = train_cfg.beta1, train_cfg.beta2
    c1 = 1.0 - b1 ** step_index
    c2 = 1.0 - b2 ** step_index
    new_params, new_state = {}, {}
    for name, theta in params.items():
        g = getattr(grads, name)
        if g.shape != theta.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {theta.shape}")
        m, v = opt_state[name] if opt_state else (np.zeros_like(theta), np.zeros_like(theta))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + train_cfg.eps_adam) + train_cfg.weight_decay * theta
        new_params[name] = theta - train_cfg.lr * update
        new_state[name] = (m, v)
    return TDTFParams(**new_params), new_state


def train(cfg: TDTFConfig, train_cfg: TrainConfig, data, params: Optional[TDTFParams] = None, callback=None):
    """Mini-batch AdamW training.

    Bursts are reshuffled every epoch (without replacement); the last batch
    of an epoch may be smaller.

    Returns
    -------
    params : TDTFParams
    loss_history : list of float
        Mean training loss of each epoch, accumulated over its batches.
    """
    windows, targets = _split(cfg, data)
    J = windows.shape[0]
    params = init_params(cfg) if params is None else params.copy()
    params.check(cfg)
    rng = np.random.default_rng(train_cfg.seed)
    opt_state = None
    step = 0
    history = []
    bs = train_cfg.batch_size
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(J)
        total = 0.0
        for start in range(0, J, bs):
            idx = order[start:start + bs]
            with np.errstate(over="ignore", invalid="ignore"):
                value, grads = _loss_and_grads(cfg, params, windows[idx], targets[idx])
            if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for _, g in grads.items()):
                raise DivergenceError(
                    f"training diverged at epoch {epoch}, batch {start // bs}", stage="training", step=step
                )
            step += 1
            params, opt_state = adamw_step(params, grads, opt_state, train_cfg, step)
            total += value * idx.size
        history.append(total / J)
        if callback is not None:
            callback(epoch, history[-1], params)
        logger.debug("epoch %d loss %.6e", epoch, history[-1])
    return params, history


def rollout_tdtf(
    cfg: TDTFConfig,
    params: TDTFParams,
    normalizer: Optional[Normalizer],
    initial_window,
    steps: int,
    dt: float = 1.0,
    t0: float = 0.0,
) -> Trajectory:
    """Autoregressive rollout of one window.

    The window is normalized (when a normalizer is given), every prediction
    re-uses positions ``0..n-1`` for the current sliding window, and the
    output is denormalized.
    """
    return Trajectory(
        rollout_tdtf_batch(cfg, params, normalizer, np.asarray(initial_window, dtype=float)[None], steps)[0],
        dt=dt,
        t0=t0,
        label="tdtf",
    )


def rollout_tdtf_batch(cfg, params, normalizer, initial_windows, steps) -> np.ndarray:
    """Roll out ``m`` windows together; returns ``(m, n + steps, d)``."""
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    windows = check_windows(initial_windows, cfg.n, cfg.d)
    if normalizer is not None:
        windows = normalizer.normalize(windows)
    n = cfg.n
    out = np.empty((windows.shape[0], n + steps, cfg.d))
    out[:, :n] = windows
    for k in range(steps):
        with np.errstate(over="ignore", invalid="ignore"):
            nxt = _forward_cache(cfg, params, out[:, k:k + n])[0]
        if not np.all(np.isfinite(nxt)):
            raise DivergenceError(f"TD-TF rollout diverged at step {k + 1}", stage="rollout", step=k + 1)
        out[:, n + k] = nxt
    if normalizer is not None:
        out = normalizer.denormalize(out)
    return out


# ---------------------------------------------------------- persistence


def save_tdtf(path, cfg, params, normalizer=None, train_cfg=None, final_loss=None):
    payload = {
        "config": asdict(cfg),
        "params": params.to_dict(),
        "normalizer": normalizer.to_dict() if normalizer is not None else None,
        "train_config": asdict(train_cfg) if train_cfg is not None else None,
        "final_loss": final_loss,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_tdtf(path):
    """Return ``(cfg, params, normalizer, train_cfg)``."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    cfg = TDTFConfig(**payload["config"])
    params = TDTFParams.from_dict(payload["params"])
    params.check(cfg)
    norm = payload.get("normalizer")
    tc = payload.get("train_config")
    return cfg, params, (Normalizer.from_dict(norm) if norm else None), (TrainConfig(**tc) if tc else None)


# ------------------------------------------------------------ estimator


class TDTF(RegressorMixin, BaseEstimator):
    """Time-delayed transformer as a scikit-learn style regressor.

    Input conventions match :class:`delayroll.tddmd.TDDMD`.

    Parameters
    ----------
    n : int
        Delay length.
    h : int
        Hidden width of the feedforward map.
    pos_enc : bool
        Append the relative position ``k/n`` to each state.
    activation : {"tanh", "relu", "gelu"}
    lr, batch_size, epochs, weight_decay, beta1, beta2, eps_adam
        AdamW settings.
    seed : int
        Seeds both the initialization and the per-epoch shuffling.

    Attributes
    ----------
    params_ : TDTFParams
    config_ : TDTFConfig
    loss_history_ : list of float
    """

    def __init__(
        self,
        n=2,
        h=10,
        pos_enc=True,
        activation="tanh",
        lr=1e-2,
        batch_size=100,
        epochs=500,
        weight_decay=0.0,
        beta1=0.9,
        beta2=0.999,
        eps_adam=1e-8,
        seed=0,
    ):
        self.n = n
        self.h = h
        self.pos_enc = pos_enc
        self.activation = activation
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps_adam = eps_adam
        self.seed = seed

    def _train_config(self):
        names = [f.name for f in fields(TrainConfig)]
        return TrainConfig(**{k: getattr(self, k) for k in names})

    def fit(self, X, y=None):
        bursts = as_bursts(X, y)
        if bursts.shape[1] - 1 != self.n:
            raise ValueError(f"bursts have n={bursts.shape[1] - 1}, estimator expects n={self.n}")
        self.config_ = TDTFConfig(
            n=self.n, d=bursts.shape[2], h=self.h, pos_enc=self.pos_enc, activation=self.activation, seed=self.seed
        )
        self.train_config_ = self._train_config()
        self.params_, self.loss_history_ = train(self.config_, self.train_config_, bursts)
        self.n_features_in_ = bursts.shape[2]
        return self

    def predict(self, X):
        check_is_fitted(self)
        return forward_batch(self.config_, self.params_, X)

    def rollout(self, initial_window, steps, normalizer=None, dt=1.0, t0=0.0):
        check_is_fitted(self)
        return rollout_tdtf(self.config_, self.params_, normalizer, initial_window, steps, dt=dt, t0=t0)
