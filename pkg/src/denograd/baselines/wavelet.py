"""Daubechies-4 wavelet shrinkage with the universal threshold.

The transform is the periodized orthogonal DWT. Columns are first extended
by mirroring (x, reversed x) and then edge-reflected up to a multiple of
2**level, which keeps the periodic wrap-around smooth; the output is cropped
back to the input length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import DataError, DataMatrix

# decomposition low-pass filter, minimum-phase Daubechies construction with 4
# vanishing moments (8 taps)
DB4_LOW = np.array([
    -0.010597401785069032,
    0.0328830116668852,
    0.030841381835560764,
    -0.18703481171909309,
    -0.027983769416859854,
    0.6308807679298589,
    0.7148465705529157,
    0.2303778133088965,
])
DB4_HIGH = np.array([(-1) ** k * DB4_LOW[len(DB4_LOW) - 1 - k] for k in range(len(DB4_LOW))])

MAD_TO_SIGMA = 0.6745


@dataclass
class WaveletParams:
    wavelet: str = "db4"
    max_level: int | None = None
    threshold_mode: str = "soft"
    # overrides the universal threshold when set
    threshold: float | None = None

    def __post_init__(self):
        if self.wavelet != "db4":
            raise ValueError(f"unsupported wavelet {self.wavelet!r}")
        if self.threshold_mode != "soft":
            raise ValueError(f"unsupported threshold mode {self.threshold_mode!r}")
        if self.max_level is not None and self.max_level < 1:
            raise ValueError("max_level must be >= 1")


def max_level(n: int, filter_len: int = len(DB4_LOW)) -> int:
    if n < filter_len:
        return 0
    return max(1, int(np.floor(np.log2(n / (filter_len - 1)))))


def _taps(n, k_count, filter_len):
    # index matrix: row k lists positions 2k, 2k+1, ... (mod n)
    return (2 * np.arange(k_count)[:, None] + np.arange(filter_len)[None, :]) % n


def dwt_step(x):
    n = len(x)
    idx = _taps(n, n // 2, len(DB4_LOW))
    return x[idx] @ DB4_LOW, x[idx] @ DB4_HIGH


def idwt_step(a, d):
    n = 2 * len(a)
    idx = _taps(n, len(a), len(DB4_LOW))
    out = np.zeros(n)
    np.add.at(out, idx, a[:, None] * DB4_LOW[None, :] + d[:, None] * DB4_HIGH[None, :])
    return out


def wavedec(x, level):
    """Returns [a_level, d_level, ..., d_1]; len(x) must be divisible by 2**level."""
    if len(x) % (2**level):
        raise DataError(f"length {len(x)} not divisible by 2**{level}")
    details = []
    a = np.asarray(x, dtype=float)
    for _ in range(level):
        a, d = dwt_step(a)
        details.append(d)
    return [a, *reversed(details)]


def waverec(coeffs):
    a = coeffs[0]
    for d in coeffs[1:]:
        a = idwt_step(a, d)
    return a


def _extend(x, level):
    ext = np.concatenate([x, x[::-1]])
    block = 2**level
    pad = (-len(ext)) % block
    if pad:
        ext = np.pad(ext, (0, pad), mode="reflect" if pad < len(ext) else "wrap")
    return ext


def soft_threshold(c, lam):
    return np.sign(c) * np.maximum(np.abs(c) - lam, 0.0)


def universal_threshold(d1, n):
    sigma = np.median(np.abs(d1)) / MAD_TO_SIGMA
    return sigma * np.sqrt(2 * np.log(n))


def wavelet_denoise_1d(x, params: WaveletParams | None = None) -> np.ndarray:
    params = params or WaveletParams()
    x = np.asarray(x, dtype=float)
    n = len(x)
    auto = max_level(n)
    if auto < 1:
        raise DataError(f"column of length {n} is too short for one DB4 level")
    level = auto if params.max_level is None else min(params.max_level, auto)
    ext = _extend(x, level)
    coeffs = wavedec(ext, level)
    lam = universal_threshold(coeffs[-1], n) if params.threshold is None else params.threshold
    coeffs = [coeffs[0]] + [soft_threshold(d, lam) for d in coeffs[1:]]
    return waverec(coeffs)[:n]


def wavelet_denoise(data: DataMatrix, params: WaveletParams | None = None) -> DataMatrix:
    if not np.all(np.isfinite(data.values)):
        raise DataError("input contains non-finite values")
    cols = [wavelet_denoise_1d(data.values[:, j], params) for j in range(data.shape[1])]
    return data.with_values(np.column_stack(cols))
