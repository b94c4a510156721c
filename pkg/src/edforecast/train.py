"""Weighted empirical prediction risk, backpropagation and SGD training.

The empirical risk of a predictor f on a lag dataset built from a series of
length n with r lags is

    (1/n) * sum_{i=r+1..n} (1/d) |X_i - f(input_i)|_2^2 * W(input_i),

i.e. n-r summands divided by n.  Training minimizes the batch-mean version
of the same per-sample loss plus an optional L2 penalty on all parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import LagDataset
from .network import Architecture, Network


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class WeightFn:
    """Weight function on the lag-input space, with values in [0,1].

    ``constant_one`` weighs every sample equally.  ``box_ramp`` is 1 on the
    inner box [varsigma, 1-varsigma]^dims, 0 outside [0,1]^dims, and ramps
    linearly in the sup-distance to the inner box in between; it is
    (1/varsigma)-Lipschitz.
    """

    kind: str = "constant_one"
    varsigma: float = 0.1
    dims: int = 0

    def __post_init__(self):
        if self.kind not in ("constant_one", "box_ramp"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind == "box_ramp" and not (0.0 < self.varsigma < 0.5):
            raise ValueError(
                f"box_ramp needs 0 < varsigma < 1/2, got {self.varsigma}"
            )

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.kind == "constant_one":
            return np.ones(X.shape[0])
        lo = np.maximum(self.varsigma - X, 0.0)
        hi = np.maximum(X - (1.0 - self.varsigma), 0.0)
        dist = np.max(np.maximum(lo, hi), axis=1)
        return 1.0 - np.clip(dist / self.varsigma, 0.0, 1.0)


def weight_eval(w: WeightFn, x) -> float:
    return float(w(np.asarray(x, dtype=np.float64)[None, :])[0])


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings.

    batch_size defaults to 1 (per-sample stochastic gradient steps): the
    benchmark learning-rate schedules are calibrated to that regime, and
    mean-gradient mini-batches at the same rates converge far slower.
    """

    epochs: int
    lr_schedule: tuple = ((0, 1e-3),)
    l2_lambda: float = 0.0
    batch_size: int = 1
    seed: int = 0
    project_entries: bool = False
    prune_to_s: int | None = None

    def __post_init__(self):
        sched = tuple((int(e), float(r)) for e, r in self.lr_schedule)
        object.__setattr__(self, "lr_schedule", sched)
        if not sched or sched[0][0] != 0:
            raise ValueError("lr_schedule must start at epoch threshold 0")
        thresholds = [e for e, _ in sched]
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError("lr_schedule thresholds must be strictly increasing")
        if any(r < 0 for _, r in sched):
            raise ValueError("learning rates must be nonnegative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    def rate_at(self, epoch: int) -> float:
        rate = self.lr_schedule[0][1]
        for threshold, r in self.lr_schedule:
            if epoch >= threshold:
                rate = r
        return rate


def init_network(arch: Architecture, seed: int) -> Network:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization per layer."""
    rng = np.random.default_rng(seed)
    weights = []
    for i in range(arch.L + 1):
        bound = 1.0 / np.sqrt(arch.p[i])
        weights.append(rng.uniform(-bound, bound, size=(arch.p[i + 1], arch.p[i])))
    biases = [np.zeros(arch.p[i + 1]) for i in range(arch.L)]
    return Network(arch, weights, biases)


def empirical_risk(net_or_fn, data: LagDataset, w: WeightFn) -> float:
    """Weighted empirical prediction risk of a network or batch predictor."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    pred = net_or_fn.eval_batch(data.X) if isinstance(net_or_fn, Network) \
        else net_or_fn(data.X)
    resid = data.Y - pred
    per_sample = np.sum(resid * resid, axis=1) / data.d
    return float(np.sum(per_sample * w(data.X)) / data.n)


def naive_predict(data: LagDataset, w: WeightFn | None = None) -> float:
    """Risk of forecasting the next value with the most recent lag."""
    if data.r < 1:
        raise ValueError("naive predictor needs r >= 1")
    w = w or WeightFn()
    return empirical_risk(lambda X: X[:, : data.d], data, w)


def gradient(net: Network, X: np.ndarray, Y: np.ndarray, w: WeightFn,
             l2_lambda: float = 0.0):
    """Exact gradient of the batch-mean weighted loss plus L2 penalty.

    Returns (weight gradients, bias gradients) matching the network layout.
    The ReLU subgradient at a kink is taken as 0.
    """
    L = net.arch.L
    nb = X.shape[0]
    if nb == 0:
        raise ValueError("empty batch")
    acts = [np.asarray(X, dtype=np.float64)]
    pre = []
    for i in range(L):
        z = acts[-1] @ net.weights[i].T - net.biases[i]
        pre.append(z)
        acts.append(np.maximum(z, 0.0))
    out = acts[-1] @ net.weights[L].T

    wts = w(X)
    g_out = (2.0 / (net.arch.out_dim * nb)) * (out - Y) * wts[:, None]

    g_w = [None] * (L + 1)
    g_b = [None] * L
    g_w[L] = g_out.T @ acts[L]
    g_a = g_out @ net.weights[L]
    for i in range(L - 1, -1, -1):
        g_z = g_a * (pre[i] > 0.0)
        g_b[i] = -np.sum(g_z, axis=0)
        g_w[i] = g_z.T @ acts[i]
        if i > 0:
            g_a = g_z @ net.weights[i]
    if l2_lambda:
        g_w = [gw + 2.0 * l2_lambda * wm for gw, wm in zip(g_w, net.weights)]
        g_b = [gb + 2.0 * l2_lambda * bv for gb, bv in zip(g_b, net.biases)]
    return g_w, g_b


@dataclass
class EpochRecord:
    epoch: int
    train_risk: float
    test_risk: float | None = None


def train_sgd(net: Network, data: LagDataset, cfg: TrainConfig, w: WeightFn,
              test_data: LagDataset | None = None):
    """Mini-batch SGD with the configured learning-rate schedule.

    Deterministic for fixed (seed, config, data).  Returns the trained
    network and the per-epoch learning curve.  Aborts with diagnostics if
    the train risk exceeds 1e6 times its initial value.
    """
    rng = np.random.default_rng(cfg.seed)
    weights = [wm.copy() for wm in net.weights]
    biases = [bv.copy() for bv in net.biases]
    current = Network(net.arch, weights, biases)

    initial = empirical_risk(current, data, w)
    ceiling = 1e6 * max(initial, 1e-12)
    curve = []
    n_samples = len(data)
    for epoch in range(cfg.epochs):
        lr = cfg.rate_at(epoch)
        order = rng.permutation(n_samples)
        for start in range(0, n_samples, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            g_w, g_b = gradient(current, data.X[idx], data.Y[idx], w, cfg.l2_lambda)
            for i in range(net.arch.L + 1):
                weights[i] -= lr * g_w[i]
            for i in range(net.arch.L):
                biases[i] -= lr * g_b[i]
            if cfg.project_entries:
                for i in range(net.arch.L + 1):
                    np.clip(weights[i], -1.0, 1.0, out=weights[i])
                for i in range(net.arch.L):
                    np.clip(biases[i], -1.0, 1.0, out=biases[i])
        train_risk = empirical_risk(current, data, w)
        test_risk = (
            empirical_risk(current, test_data, w) if test_data is not None else None
        )
        curve.append(EpochRecord(epoch=epoch, train_risk=train_risk, test_risk=test_risk))
        if not np.isfinite(train_risk) or train_risk > ceiling:
            raise TrainingDiverged(
                f"train risk {train_risk:.3e} exceeded 1e6 x initial {initial:.3e} "
                f"at epoch {epoch} (lr={lr:g}); reduce the learning rate"
            )

    result = Network(net.arch, [wm.copy() for wm in weights], [bv.copy() for bv in biases])
    if cfg.prune_to_s is not None:
        result, _ = prune_to_sparsity(result, cfg.prune_to_s)
    return result, curve


def prune_to_sparsity(net: Network, s: int):
    """Zero all but the s largest-magnitude parameters.

    Returns the pruned network and the sum of squared pruned entries (an
    informational bound on the loss perturbation; no hard guarantee).
    Ties are broken by parameter layout order, so pruning is deterministic.
    """
    if s < 0:
        raise ValueError("sparsity target must be nonnegative")
    arrays = list(net.weights) + list(net.biases)
    flat = np.concatenate([np.abs(a).ravel() for a in arrays])
    if s >= flat.size:
        return net, 0.0
    order = np.argsort(-flat, kind="stable")
    keep = np.zeros(flat.size, dtype=bool)
    keep[order[:s]] = True
    new_arrays = []
    pruned_sq = 0.0
    pos = 0
    for a in arrays:
        mask = keep[pos : pos + a.size].reshape(a.shape)
        na = np.where(mask, a, 0.0)
        pruned_sq += float(np.sum((a - na) ** 2))
        new_arrays.append(na)
        pos += a.size
    n_w = len(net.weights)
    pruned = Network(net.arch, new_arrays[:n_w], new_arrays[n_w:])
    assert pruned.sparsity() <= s
    return pruned, pruned_sq


def multi_step_forecast(net: Network, x0, k: int) -> np.ndarray:
    """Iterate the one-step predictor k steps ahead.

    The newest forecast is rotated into the front of the lag state; returns
    the (k, d) array of forecasts.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    d = net.arch.out_dim
    dr = net.arch.in_dim
    if dr % d != 0:
        raise ValueError(f"input dim {dr} is not a multiple of output dim {d}")
    state = np.asarray(x0, dtype=np.float64).reshape(-1).copy()
    if state.shape[0] != dr:
        raise ValueError(f"lag state has dim {state.shape[0]}, expected {dr}")
    outs = np.empty((k, d))
    for j in range(k):
        y = net.eval(state)
        outs[j] = y
        state = np.concatenate([y, state[: dr - d]])
    return outs


def curve_to_csv(curve, path, provenance: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, val in (provenance or {}).items():
            fh.write(f"# {key}={val}\n")
        fh.write("epoch,train_risk,test_risk\n")
        for rec in curve:
            test = "" if rec.test_risk is None else repr(rec.test_risk)
            fh.write(f"{rec.epoch},{rec.train_risk!r},{test}\n")


def curve_to_json(curve) -> str:
    return json.dumps(
        [
            {"epoch": r.epoch, "train_risk": r.train_risk, "test_risk": r.test_risk}
            for r in curve
        ]
    )
