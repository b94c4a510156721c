"""Lag-embedded datasets and series CSV input/output.

A series of length n with d coordinates becomes n-r sample pairs
(input, target) where the input concatenates the r most recent lags
newest-first: input_i = (X_{i-1}, X_{i-2}, ..., X_{i-r}).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateScaleError(ValueError):
    """A coordinate is constant, so min-max normalization is undefined."""


@dataclass(frozen=True)
class Scaler:
    """Per-coordinate min-max map onto [0,1]."""

    lo: np.ndarray
    hi: np.ndarray

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.lo) / (self.hi - self.lo)

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return values * (self.hi - self.lo) + self.lo


@dataclass(frozen=True)
class LagDataset:
    """Sample pairs (lag vector, next value) plus the risk normalization n.

    X has shape (n-r, d*r), Y has shape (n-r, d).  ``n`` is the original
    series length; the empirical risk divides by n even though only n-r
    terms are summed.
    """

    X: np.ndarray
    Y: np.ndarray
    r: int
    d: int
    n: int
    scaler: Scaler | None = None

    def __len__(self) -> int:
        return self.X.shape[0]


def fit_scaler(series: np.ndarray) -> Scaler:
    lo = series.min(axis=0)
    hi = series.max(axis=0)
    degenerate = np.nonzero(hi <= lo)[0]
    if degenerate.size:
        raise DegenerateScaleError(
            f"coordinate {int(degenerate[0])} is constant; min-max scale undefined"
        )
    return Scaler(lo=lo, hi=hi)


def lag_embed(series: np.ndarray, r: int, normalize: bool = False,
              scaler: Scaler | None = None) -> LagDataset:
    """Build (lag vector, next value) pairs from an (n, d) series.

    With ``normalize``, each coordinate is min-max scaled to [0,1] (a shared
    per-coordinate scaler for inputs and targets) and the scaler is recorded
    on the dataset.  Pass ``scaler`` to reuse a previously fitted one, e.g.
    to put test data on the training scale.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    n, d = series.shape
    if n <= r:
        raise ValueError(f"series length {n} too short for lag count r={r}")
    if not np.all(np.isfinite(series)):
        raise ValueError("series contains non-finite values")
    if normalize or scaler is not None:
        if scaler is None:
            scaler = fit_scaler(series)
        series = scaler.transform(series)
    m = n - r
    X = np.empty((m, d * r))
    for lag in range(1, r + 1):
        X[:, (lag - 1) * d : lag * d] = series[r - lag : n - lag]
    Y = series[r:]
    return LagDataset(X=X, Y=Y, r=r, d=d, n=n, scaler=scaler)


def save_series_csv(path, series: np.ndarray, provenance: dict | None = None) -> None:
    """Write a series as CSV with header t,x1,...,xd.

    Provenance key/value pairs are emitted as leading '# key=value' comment
    lines so that re-runs with identical configuration are byte-identical.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    d = series.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        for key, val in (provenance or {}).items():
            fh.write(f"# {key}={val}\n")
        fh.write("t," + ",".join(f"x{j + 1}" for j in range(d)) + "\n")
        for t, row in enumerate(series, start=1):
            fh.write(str(t) + "," + ",".join(repr(float(v)) for v in row) + "\n")


def load_series_csv(path) -> np.ndarray:
    """Read a series CSV written by :func:`save_series_csv`."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                if header[0] != "t":
                    raise ValueError(f"unexpected series header {header!r}")
                continue
            parts = line.split(",")
            rows.append([float(v) for v in parts[1:]])
    if not rows:
        raise ValueError(f"no data rows in {path}")
    return np.asarray(rows, dtype=np.float64)
