"""Synthetic data: sinusoid, Lorenz '63 and a 1-D reaction-diffusion model
reduced by proper orthogonal decomposition (POD)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import Trajectory
from .exceptions import DivergenceError

__all__ = [
    "gen_sinusoid",
    "LorenzConfig",
    "lorenz_rhs",
    "rk4_step",
    "gen_lorenz",
    "project_component",
    "ReactionDiffusionConfig",
    "solve_reaction_diffusion",
    "PODBasis",
    "POD",
    "compute_pod",
]


def gen_sinusoid(K: int, dt: float) -> Trajectory:
    """Scalar signal ``w_k = sin(k dt)`` for ``k = 0..K``."""
    if K < 1 or not dt > 0:
        raise ValueError(f"need K >= 1 and dt > 0, got K={K}, dt={dt}")
    return Trajectory(np.sin(dt * np.arange(K + 1)), dt=dt, label="sinusoid")


# ------------------------------------------------------------------ Lorenz


@dataclass(frozen=True)
class LorenzConfig:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0
    dt: float = 1e-2
    t_final: float = 100.0
    discard_fraction: float = 0.5
    seed: int = 0
    n_traj: int = 1000
    init_box: float = 15.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.t_final > self.dt:
            raise ValueError(f"t_final must exceed dt, got {self.t_final}")
        if not 0 <= self.discard_fraction < 1:
            raise ValueError(f"discard_fraction must lie in [0, 1), got {self.discard_fraction}")
        if self.n_traj < 1:
            raise ValueError(f"n_traj must be positive, got {self.n_traj}")
        if not self.init_box > 0:
            raise ValueError(f"init_box must be > 0, got {self.init_box}")


def lorenz_rhs(state, sigma=10.0, rho=28.0, beta=8.0 / 3.0):
    """Right-hand side of the Lorenz system; ``state`` has shape ``(..., 3)``."""
    x, y, z = state[..., 0], state[..., 1], state[..., 2]
    return np.stack([sigma * (y - x), x * (rho - z) - y, x * y - beta * z], axis=-1)


def rk4_step(f, state, dt):
    k1 = f(state)
    k2 = f(state + 0.5 * dt * k1)
    k3 = f(state + 0.5 * dt * k2)
    k4 = f(state + dt * k3)
    return state + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def lorenz_initial_conditions(cfg: LorenzConfig) -> np.ndarray:
    """One uniform draw from the init cube per trajectory.

    Trajectory ``i`` uses its own stream seeded by ``(seed, i)`` so results
    do not depend on how many trajectories are generated together.
    """
    return np.stack([
        np.random.default_rng([cfg.seed, i]).uniform(-cfg.init_box, cfg.init_box, size=3)
        for i in range(cfg.n_traj)
    ])


def integrate_lorenz(cfg: LorenzConfig, initial: np.ndarray) -> np.ndarray:
    """RK4 integration of a batch of initial conditions.

    Returns the full ``(n_traj, n_steps + 1, 3)`` history before discarding.
    """
    initial = np.atleast_2d(np.asarray(initial, dtype=float))
    n_steps = int(round(cfg.t_final / cfg.dt))
    f = lambda s: lorenz_rhs(s, cfg.sigma, cfg.rho, cfg.beta)  # noqa: E731
    out = np.empty((initial.shape[0], n_steps + 1, 3))
    out[:, 0] = initial
    state = initial
    for k in range(1, n_steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            state = rk4_step(f, state, cfg.dt)
        out[:, k] = state
        if not np.all(np.isfinite(state)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(state), axis=1))[0])
            raise DivergenceError(
                f"Lorenz integration diverged in trajectory {bad} at step {k}",
                stage="integration",
                step=k,
            )
    return out


def gen_lorenz(cfg: LorenzConfig, initial: Optional[np.ndarray] = None) -> list:
    """Generate ``cfg.n_traj`` post-transient 3-D Lorenz trajectories.

    ``initial`` overrides the random initial conditions (one row per
    trajectory).
    """
    if initial is None:
        initial = lorenz_initial_conditions(cfg)
    history = integrate_lorenz(cfg, initial)
    n_steps = history.shape[1] - 1
    start = int(round(cfg.discard_fraction * n_steps))
    t0 = start * cfg.dt
    return [
        Trajectory(h[start:], dt=cfg.dt, t0=t0, label=f"lorenz-{i}")
        for i, h in enumerate(history)
    ]


def project_component(traj: Trajectory, idx: int) -> Trajectory:
    """Keep a single observable component."""
    if not 0 <= idx < traj.d:
        raise ValueError(f"component {idx} out of range for d={traj.d}")
    return Trajectory(traj.states[:, idx], dt=traj.dt, t0=traj.t0, label=traj.label)


# ------------------------------------------------------- reaction-diffusion


@dataclass(frozen=True)
class ReactionDiffusionConfig:
    """Activator-inhibitor system on ``x in [0, 1]``.

    ``dt=None`` picks 0.9 of the largest stable step. ``save_every`` is the
    stride (in solver steps) between stored snapshots. ``reaction=False`` and
    ``boundary="neumann"`` give the pure-diffusion, zero-flux self-test
    configuration.
    """

    D: float = 0.0322307
    eps: float = 0.01
    alpha: float = 0.01
    nx: int = 256
    dt: Optional[float] = None
    t_final: float = 100.0
    t_discard: float = 15.0
    bc_u: float = -2.0
    bc_v: float = -4.0
    save_every: int = 50
    reaction: bool = True
    boundary: str = "dirichlet"
    u0: Optional[tuple] = field(default=None, repr=False)
    v0: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        if self.nx < 3:
            raise ValueError(f"nx must be >= 3, got {self.nx}")
        if self.D < 0 or not self.eps > 0:
            raise ValueError(f"need D >= 0 and eps > 0, got D={self.D}, eps={self.eps}")
        if self.boundary not in ("dirichlet", "neumann"):
            raise ValueError(f"boundary must be 'dirichlet' or 'neumann', got {self.boundary!r}")
        if self.save_every < 1:
            raise ValueError(f"save_every must be positive, got {self.save_every}")
        bound = self.stability_bound
        if self.dt is None:
            object.__setattr__(self, "dt", 0.9 * bound)
        elif not 0 < self.dt <= bound:
            raise ValueError(f"dt={self.dt} violates the explicit stability bound {bound:.6g}")
        if not self.t_final > self.dt:
            raise ValueError(f"t_final must exceed dt, got {self.t_final}")

    @property
    def dx(self) -> float:
        return 1.0 / (self.nx - 1)

    @property
    def stability_bound(self) -> float:
        bound = 0.4 * self.eps if self.reaction else np.inf
        if self.D > 0:
            bound = min(bound, 0.4 * self.dx ** 2 / self.D)
        if not np.isfinite(bound):
            raise ValueError("no stability bound: set D > 0 or enable reaction")
        return float(bound)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nx)

    def to_dict(self):
        out = asdict(self)
        out["u0"] = out["v0"] = None
        return out


def _default_initial(cfg: ReactionDiffusionConfig):
    x = cfg.grid
    u = -2.0 + 4.0 * np.sin(np.pi * x) * np.cos(2.0 * np.pi * x)
    v = -4.0 + 2.0 * np.sin(np.pi * x)
    return u, v


def _laplacian(f, dx, boundary, out):
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / dx ** 2
    if boundary == "neumann":
        # mirrored ghost nodes
        out[0] = 2.0 * (f[1] - f[0]) / dx ** 2
        out[-1] = 2.0 * (f[-2] - f[-1]) / dx ** 2
    else:
        out[0] = out[-1] = 0.0
    return out


def solve_reaction_diffusion(cfg: ReactionDiffusionConfig):
    """Method-of-lines solve with central differences and forward Euler.

    Returns
    -------
    snapshots : ndarray, shape (nx, m)
        ``u`` at every stored time with ``t >= t_discard``.
    times : ndarray, shape (m,)
    """
    if cfg.u0 is not None:
        u = np.array(cfg.u0, dtype=float)
        v = np.array(cfg.v0 if cfg.v0 is not None else _default_initial(cfg)[1], dtype=float)
    else:
        u, v = _default_initial(cfg)
    if u.shape != (cfg.nx,) or v.shape != (cfg.nx,):
        raise ValueError(f"initial fields must have length nx={cfg.nx}")
    dirichlet = cfg.boundary == "dirichlet"
    if dirichlet:
        u[[0, -1]] = cfg.bc_u
        v[[0, -1]] = cfg.bc_v

    dt, dx, D = cfg.dt, cfg.dx, cfg.D
    n_steps = int(round(cfg.t_final / dt))
    lap_u = np.empty_like(u)
    lap_v = np.empty_like(v)
    inv_eps = 1.0 / cfg.eps
    snaps, times = [], []
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps + 1):
            t = k * dt
            if k % cfg.save_every == 0:
                if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                    raise DivergenceError(
                        f"reaction-diffusion field diverged at step {k} (t={t:.6g})",
                        stage="integration",
                        step=k,
                    )
                if t >= cfg.t_discard - 1e-12:
                    snaps.append(u.copy())
                    times.append(t)
            if k == n_steps:
                break
            du = D * _laplacian(u, dx, cfg.boundary, lap_u)
            dv = D * _laplacian(v, dx, cfg.boundary, lap_v)
            if cfg.reaction:
                du += inv_eps * (v - u * u - u * u * u)
                dv += cfg.alpha - u
            u += dt * du
            v += dt * dv
            if dirichlet:
                u[0] = u[-1] = cfg.bc_u
                v[0] = v[-1] = cfg.bc_v
    if not snaps:
        raise ValueError("no snapshots retained; check t_discard and t_final")
    return np.stack(snaps, axis=1), np.array(times)


# --------------------------------------------------------------------- POD


@dataclass(frozen=True)
class PODBasis:
    modes: np.ndarray
    singular_values: np.ndarray
    mean: Optional[np.ndarray] = None
    total_energy: float = np.nan

    @property
    def r(self) -> int:
        return self.modes.shape[1]

    @property
    def energy_fraction(self) -> float:
        """Fraction of squared singular-value energy kept by ``r`` modes."""
        return float(np.sum(self.singular_values ** 2) / self.total_energy)

    def project(self, snapshots):
        """Coefficients of ``(nx, m)`` snapshots, shape ``(m, r)``."""
        s = np.asarray(snapshots, dtype=float)
        if self.mean is not None:
            s = s - self.mean[:, None]
        return (self.modes.T @ s).T

    def reconstruct(self, coeffs):
        """Fields ``(nx, m)`` from coefficients ``(m, r)``."""
        fields = self.modes @ np.asarray(coeffs, dtype=float).T
        if self.mean is not None:
            fields = fields + self.mean[:, None]
        return fields


class POD(TransformerMixin, BaseEstimator):
    """Proper orthogonal decomposition of snapshot rows.

    Follows the scikit-learn convention: ``X`` has one snapshot per row, so
    ``transform`` returns ``(m, n_components)`` coefficients. The mean is
    kept unless ``subtract_mean`` is set. Each mode is sign-flipped so its
    largest-magnitude entry is positive.
    """

    def __init__(self, n_components=3, subtract_mean=False):
        self.n_components = n_components
        self.subtract_mean = subtract_mean

    def fit(self, X, y=None):
        X = check_array(X)
        m, nx = X.shape
        r = self.n_components
        if m < 2:
            raise ValueError(f"need at least 2 snapshots, got {m}")
        if not 1 <= r <= min(nx, m):
            raise ValueError(f"n_components={r} must lie in [1, min(nx, m)={min(nx, m)}]")
        mean = X.mean(axis=0) if self.subtract_mean else None
        S = (X - mean).T if mean is not None else X.T
        U, s, _ = np.linalg.svd(S, full_matrices=False)
        modes = U[:, :r].copy()
        pivot = np.argmax(np.abs(modes), axis=0)
        modes *= np.sign(modes[pivot, np.arange(r)])
        self.basis_ = PODBasis(
            modes=modes, singular_values=s[:r].copy(), mean=mean, total_energy=float(np.sum(s ** 2))
        )
        self.singular_values_ = s
        self.n_features_in_ = nx
        return self

    def transform(self, X):
        check_is_fitted(self)
        return self.basis_.project(check_array(X).T)

    def inverse_transform(self, X):
        check_is_fitted(self)
        return self.basis_.reconstruct(check_array(X)).T


def compute_pod(snapshots, r: int, dt: float = 1.0, t0: float = 0.0, subtract_mean: bool = False):
    """POD of an ``(nx, m)`` snapshot matrix.

    Returns the basis and the ``r``-dimensional coefficient trajectory.
    """
    snapshots = np.asarray(snapshots, dtype=float)
    pod = POD(n_components=r, subtract_mean=subtract_mean).fit(snapshots.T)
    coeffs = pod.basis_.project(snapshots)
    return pod.basis_, Trajectory(coeffs, dt=dt, t0=t0, label="pod")
