"""Stationary series generation and Monte Carlo dependence diagnostics.

The generator iterates X_i = f0(X_{i-1}, ..., X_{i-r}) + eps_i with i.i.d.
Gaussian innovations, discarding a burn-in prefix.  Evolution maps are
batched callables mapping (n, d*r) lag blocks to (n, d) values so that
Monte Carlo replications can run vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import LagDataset, lag_embed  # noqa: F401  (re-exported)


class UnstableModelError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeSeriesModel:
    d: int
    r: int
    f0: Callable[[np.ndarray], np.ndarray]
    noise_sd: float
    seed: int = 0
    name: str = "custom"
    spectral_radius: float | None = None

    def describe(self) -> dict:
        out = {"name": self.name, "d": self.d, "r": self.r,
               "noise_sd": self.noise_sd, "seed": self.seed}
        if self.spectral_radius is not None:
            out["spectral_radius"] = self.spectral_radius
        return out


def zero_model(d: int, r: int = 1, noise_sd: float = 1.0, seed: int = 0) -> TimeSeriesModel:
    return TimeSeriesModel(d=d, r=r, f0=lambda X: np.zeros((X.shape[0], d)),
                           noise_sd=noise_sd, seed=seed, name="zero",
                           spectral_radius=0.0)


def companion_spectral_radius(v: np.ndarray, a: np.ndarray, r: int, d: int) -> float:
    """Spectral radius of the lag-companion matrix of x -> v a x."""
    top = v @ a  # d x (d*r)
    if r == 1:
        return float(np.max(np.abs(np.linalg.eigvals(top))))
    comp = np.zeros((d * r, d * r))
    comp[:d, :] = top
    comp[d:, : d * (r - 1)] = np.eye(d * (r - 1))
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def linear_model(v, a, noise_sd: float, r: int = 1, seed: int = 0,
                 name: str = "linear") -> TimeSeriesModel:
    """Rank-reduced linear evolution f0(x) = v (a x) with v: d x k, a: k x dr."""
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    d = v.shape[0]
    if a.shape[1] != d * r:
        raise ValueError(f"a maps dim {a.shape[1]}, expected d*r={d * r}")
    if v.shape[1] != a.shape[0]:
        raise ValueError(f"rank mismatch: v is {v.shape}, a is {a.shape}")
    rad = companion_spectral_radius(v, a, r, d)
    mat = v @ a

    def f0(X: np.ndarray) -> np.ndarray:
        return X @ mat.T

    return TimeSeriesModel(d=d, r=r, f0=f0, noise_sd=noise_sd, seed=seed,
                           name=name, spectral_radius=rad)


def low_d_model(seed: int = 0) -> TimeSeriesModel:
    """5-dimensional rank-1 benchmark; companion eigenvalue a.v = 0.85."""
    a = np.array([[0.5, 0.6, 0.2, 0.3, 0.5]])
    v = np.array([[0.4], [0.6], [0.5], [-0.2], [0.5]])
    return linear_model(v, a, noise_sd=0.5, r=1, seed=seed, name="low_d")


def high_d_model(seed: int = 0) -> TimeSeriesModel:
    """30-dimensional rank-2 benchmark with alternating +-0.05 middle block."""
    s = np.tile([0.05, -0.05], 12)
    a = np.vstack([
        np.concatenate([[0.3, 0.6, 0.5], s, [0.0, -1.0, 0.4]]),
        np.concatenate([[0.5, -0.6, 0.2], s, [0.4, 0.9, 1.0]]),
    ])
    v = np.column_stack([
        np.full(30, 0.4),
        np.tile([0.5, -0.3], 15),
    ])
    return linear_model(v, a, noise_sd=0.5, r=1, seed=seed, name="high_d")


def seasonal_model(d: int = 8, period: int = 24, decay: float = 0.95,
                   noise_sd: float = 0.5, seed: int = 0) -> TimeSeriesModel:
    """Quasi-periodic rank-2 model: a damped rotation in a 2-d latent plane.

    The companion eigenvalues are decay * exp(+-2*pi*i/period), giving a
    stationary series with a pronounced cycle of the given period.
    """
    rng = np.random.default_rng(12345)
    v = rng.uniform(-1.0, 1.0, size=(d, 2))
    v /= np.linalg.norm(v, axis=0, keepdims=True)
    theta = 2.0 * np.pi / period
    rot = decay * np.array([[np.cos(theta), -np.sin(theta)],
                            [np.sin(theta), np.cos(theta)]])
    # a reconstructs the latent pair from X (pseudo-inverse of v), then rotates
    a = rot @ np.linalg.pinv(v)
    return linear_model(v, a, noise_sd=noise_sd, r=1, seed=seed, name="seasonal")


def generate(model: TimeSeriesModel, n: int, burn_in: int = 1000,
             seed: int | None = None) -> np.ndarray:
    """Emit n steps of the recursion after discarding burn_in steps.

    Lags initialize at zero.  Deterministic for a fixed seed; raises with a
    spectral-radius diagnostic if the path blows up during generation.
    """
    if n < model.r + 1:
        raise ValueError(f"n={n} must be at least r+1={model.r + 1}")
    rng = np.random.default_rng(model.seed if seed is None else seed)
    d, r = model.d, model.r
    state = np.zeros(d * r)
    out = np.empty((n, d))
    total = burn_in + n
    noise = rng.standard_normal((total, d)) * model.noise_sd
    for step in range(total):
        x = model.f0(state[None, :])[0] + noise[step]
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e12:
            rad = model.spectral_radius
            raise UnstableModelError(
                f"path diverged at step {step}"
                + (f" (companion spectral radius {rad:.4f})" if rad is not None else "")
            )
        if step >= burn_in:
            out[step - burn_in] = x
        state = np.concatenate([x, state[: d * (r - 1)]]) if r > 1 else x
    return out


def _stationary_states(model: TimeSeriesModel, n_mc: int, burn_in: int,
                       rng: np.random.Generator) -> np.ndarray:
    """n_mc approximately independent lag states, vectorized across lanes."""
    d, r = model.d, model.r
    states = np.zeros((n_mc, d * r))
    for _ in range(burn_in):
        x = model.f0(states) + rng.standard_normal((n_mc, d)) * model.noise_sd
        states = np.hstack([x, states[:, : d * (r - 1)]]) if r > 1 else x
    return states


def prediction_error_mc(f: Callable[[np.ndarray], np.ndarray],
                        model: TimeSeriesModel,
                        w: Callable[[np.ndarray], np.ndarray] | None = None,
                        n_mc: int = 10000, burn_in: int = 300,
                        seed: int | None = None):
    """Monte Carlo estimate of the expected one-step prediction error of f.

    Draws n_mc fresh stationary lag states, advances each one step, and
    averages the weighted squared forecast error.  Returns (estimate,
    standard error).
    """
    if n_mc < 100:
        raise ValueError("n_mc must be at least 100")
    rng = np.random.default_rng(model.seed + 7919 if seed is None else seed)
    states = _stationary_states(model, n_mc, burn_in, rng)
    nxt = model.f0(states) + rng.standard_normal((n_mc, model.d)) * model.noise_sd
    resid = nxt - f(states)
    vals = np.sum(resid * resid, axis=1) / model.d
    if w is not None:
        vals = vals * w(states)
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / np.sqrt(n_mc))
    return est, se


def estimate_fdm(model: TimeSeriesModel, k: int, q: float = 2.0,
                 n_mc: int = 10000, burn_in: int = 300,
                 seed: int | None = None):
    """Coupled-path estimate of the functional dependence measure at lag k.

    Runs paired recursions that share every innovation except the one k
    steps back, which is swapped for an independent copy; reports the
    largest per-coordinate q-norm of the resulting discrepancy and its
    Monte Carlo standard error.
    """
    if k < 1:
        raise ValueError("lag k must be >= 1")
    rng = np.random.default_rng(model.seed + 104729 if seed is None else seed)
    d, r = model.d, model.r
    states = _stationary_states(model, n_mc, burn_in, rng)
    coupled = states.copy()

    def advance(st, eps):
        x = model.f0(st) + eps
        return np.hstack([x, st[:, : d * (r - 1)]]) if r > 1 else x

    eps_swap = rng.standard_normal((n_mc, d)) * model.noise_sd
    eps_star = rng.standard_normal((n_mc, d)) * model.noise_sd
    states = advance(states, eps_swap)
    coupled = advance(coupled, eps_star)
    for _ in range(k):
        eps = rng.standard_normal((n_mc, d)) * model.noise_sd
        states = advance(states, eps)
        coupled = advance(coupled, eps)
    diff = np.abs(states[:, :d] - coupled[:, :d]) ** q
    moments = np.mean(diff, axis=0)
    j = int(np.argmax(moments))
    m = moments[j]
    se_m = float(np.std(diff[:, j], ddof=1) / np.sqrt(n_mc))
    delta = float(m ** (1.0 / q))
    se = se_m * delta / (q * m) if m > 0 else se_m
    return delta, se
