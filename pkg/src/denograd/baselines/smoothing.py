"""Column-wise sequential smoothers: centered moving average and scalar Kalman filter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import DataError, DataMatrix


def _check_finite(data: DataMatrix):
    if not np.all(np.isfinite(data.values)):
        raise DataError("input contains non-finite values")


def moving_average(data: DataMatrix, window: int = 5) -> DataMatrix:
    """Centered moving average; near the edges only in-range points are averaged.

    For even windows the extra point is taken from the future side.
    """
    if window < 1:
        raise DataError("window must be >= 1")
    x = data.values
    n = len(x)
    if window > n:
        raise DataError(f"window {window} exceeds column length {n}")
    lo = -((window - 1) // 2)
    total = np.zeros_like(x)
    count = np.zeros((n, 1))
    for k in range(lo, lo + window):
        a, b = max(0, -k), min(n, n - k)
        total[a:b] += x[a + k:b + k]
        count[a:b] += 1
    return data.with_values(total / count)


@dataclass
class KalmanParams:
    """Random-walk state model. ``x0=None`` starts each column at its first observation."""

    f: float = 1.0
    h: float = 1.0
    q: float = 0.01
    r: float = 0.01
    x0: float | None = None
    p0: float = 1.0

    def __post_init__(self):
        if not (self.q > 0 and self.r > 0 and self.p0 > 0):
            raise ValueError("q, r and p0 must be > 0")


def kalman_filter_1d(z, params: KalmanParams) -> np.ndarray:
    f, h, q, r = params.f, params.h, params.q, params.r
    x = float(z[0]) if params.x0 is None else params.x0
    p = params.p0
    out = np.empty(len(z))
    for i, obs in enumerate(z):
        x = f * x
        p = f * p * f + q
        k = p * h / (h * p * h + r)
        x = x + k * (obs - h * x)
        p = (1 - k * h) * p
        out[i] = x
    return out


def kalman_denoise(data: DataMatrix, params: KalmanParams | None = None) -> DataMatrix:
    params = params or KalmanParams()
    _check_finite(data)
    cols = [kalman_filter_1d(data.values[:, j], params) for j in range(data.shape[1])]
    return data.with_values(np.column_stack(cols))
