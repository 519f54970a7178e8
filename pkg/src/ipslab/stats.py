"""Batch-means estimation for correlated time series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_BATCHES = 30


@dataclass(frozen=True)
class Estimate:
    mean: float
    se: float

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.se

    def to_list(self) -> list[float]:
        return [self.mean, self.se]


def batch_means(series: np.ndarray, batches: int = DEFAULT_BATCHES) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise mean and batch-means standard error.

    Batches are contiguous and of equal length; leading samples that do not
    fill a batch are dropped from the error estimate only.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    mean = x.mean(axis=0) if n else np.full(x.shape[1], np.nan)
    b = min(batches, n)
    if b < 2:
        return mean, np.full(x.shape[1], np.nan)
    size = n // b
    used = x[n - b * size:].reshape(b, size, x.shape[1]).mean(axis=1)
    se = used.std(axis=0, ddof=1) / np.sqrt(b)
    return mean, se


def estimate(series: np.ndarray, batches: int = DEFAULT_BATCHES) -> Estimate:
    m, s = batch_means(np.asarray(series).ravel(), batches)
    return Estimate(float(m[0]), float(s[0]))
