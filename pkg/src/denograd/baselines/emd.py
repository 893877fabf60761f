"""Empirical mode decomposition by cubic-spline sifting.

Reconstruction from the kept IMFs plus the residual is exact by construction:
the residual is whatever the extracted IMFs do not account for.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from ..data import DataError, DataMatrix

log = logging.getLogger(__name__)


class EMDWarning(UserWarning):
    pass


@dataclass
class EMDParams:
    discard_imfs: int = 2
    sd_threshold: float = 0.3
    max_sifts: int = 10
    max_imfs: int = 10
    # boundary extrema mirrored on each side for the envelopes
    n_mirror: int = 2

    def __post_init__(self):
        if self.discard_imfs < 0:
            raise ValueError("discard_imfs must be >= 0")
        if not self.sd_threshold > 0:
            raise ValueError("sd_threshold must be > 0")
        if self.max_sifts < 1 or self.max_imfs < 1 or self.n_mirror < 1:
            raise ValueError("max_sifts, max_imfs and n_mirror must be positive")


@dataclass
class EMDResult:
    imfs: list[np.ndarray] = field(default_factory=list)
    residual: np.ndarray | None = None
    too_few_extrema: bool = False


def local_extrema(x):
    """Indices of strict local maxima and minima (plateaus count once, at their start)."""
    d = np.diff(x)
    # carry the last nonzero slope over flat stretches
    s = np.sign(d)
    nz = np.flatnonzero(s)
    if len(nz) == 0:
        return np.array([], dtype=int), np.array([], dtype=int)
    s_filled = s.copy()
    last = s[nz[0]]
    for i in range(nz[0], len(s)):
        if s[i] == 0:
            s_filled[i] = last
        else:
            last = s[i]
    s_filled[:nz[0]] = s[nz[0]]
    change = np.diff(s_filled)
    maxima = np.flatnonzero(change < 0) + 1
    minima = np.flatnonzero(change > 0) + 1
    return maxima, minima


def _mirror(idx, vals, n, k):
    """Reflect the first/last ``k`` extrema about the series endpoints."""
    left_i = -idx[:k][::-1]
    right_i = 2 * (n - 1) - idx[-k:][::-1]
    left_v = vals[:k][::-1]
    right_v = vals[-k:][::-1]
    t = np.concatenate([left_i, idx, right_i]).astype(float)
    v = np.concatenate([left_v, vals, right_v])
    # drop duplicates produced when an extremum sits on an endpoint
    t, keep = np.unique(t, return_index=True)
    return t, v[keep]


def _envelope(x, idx, k):
    n = len(x)
    t, v = _mirror(idx, x[idx], n, k)
    if len(t) < 2:
        return None
    return CubicSpline(t, v)(np.arange(n))


def _n_extrema(x):
    mx, mn = local_extrema(x)
    return len(mx) + len(mn)


def sift(x, params: EMDParams):
    h = x.copy()
    for _ in range(params.max_sifts):
        mx, mn = local_extrema(h)
        if len(mx) < 1 or len(mn) < 1 or len(mx) + len(mn) < 3:
            break
        upper = _envelope(h, mx, params.n_mirror)
        lower = _envelope(h, mn, params.n_mirror)
        if upper is None or lower is None:
            break
        new = h - 0.5 * (upper + lower)
        denom = np.sum(h**2)
        sd = np.sum((h - new) ** 2) / denom if denom > 0 else 0.0
        h = new
        if sd < params.sd_threshold:
            break
    return h


def emd(x, params: EMDParams | None = None) -> EMDResult:
    params = params or EMDParams()
    x = np.asarray(x, dtype=float)
    result = EMDResult()
    if _n_extrema(x) < 3:
        result.residual = x.copy()
        result.too_few_extrema = True
        return result
    residual = x.copy()
    while len(result.imfs) < params.max_imfs and _n_extrema(residual) >= 3:
        imf = sift(residual, params)
        result.imfs.append(imf)
        residual = residual - imf
    result.residual = residual
    return result


def emd_denoise_1d(x, params: EMDParams | None = None):
    params = params or EMDParams()
    x = np.asarray(x, dtype=float)
    res = emd(x, params)
    if res.too_few_extrema:
        return x.copy(), True
    kept = res.imfs[params.discard_imfs:]
    return res.residual + (np.sum(kept, axis=0) if kept else 0.0), False


def emd_denoise(data: DataMatrix, discard_imfs: int = 2, params: EMDParams | None = None) -> DataMatrix:
    """Drop the first ``discard_imfs`` IMFs of each column.

    Columns with fewer than three extrema are returned unchanged and an
    :class:`EMDWarning` is emitted naming them.
    """
    params = params or EMDParams(discard_imfs=discard_imfs)
    if discard_imfs < 0:
        raise DataError("discard_imfs must be >= 0")
    if len(data) < 16:
        raise DataError(f"EMD needs at least 16 samples per column, got {len(data)}")
    if not np.all(np.isfinite(data.values)):
        raise DataError("input contains non-finite values")
    cols, flat = [], []
    for j, name in enumerate(data.columns):
        out, flagged = emd_denoise_1d(data.values[:, j], params)
        cols.append(out)
        if flagged:
            flat.append(name)
    if flat:
        warnings.warn(f"fewer than 3 extrema, left unchanged: {flat}", EMDWarning, stacklevel=2)
    return data.with_values(np.column_stack(cols))
