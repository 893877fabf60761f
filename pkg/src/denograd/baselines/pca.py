from __future__ import annotations

import numpy as np

from ..data import DataError, DataMatrix


def n_components_for(explained_ratio, threshold):
    """Smallest k whose cumulative explained variance ratio reaches ``threshold``."""
    cum = np.cumsum(explained_ratio)
    # round-off can leave the full sum a hair below 1.0
    k = int(np.searchsorted(cum, threshold - 1e-12) + 1)
    return min(k, len(explained_ratio))


def pca_denoise(data: DataMatrix, variance_threshold: float = 0.95) -> DataMatrix:
    """Project centered data on its leading principal components and back."""
    if data.shape[1] < 2:
        raise DataError("PCA denoising needs at least two columns")
    if not 0 < variance_threshold <= 1:
        raise DataError("variance_threshold must lie in (0, 1]")
    x = data.values
    mean = x.mean(axis=0)
    xc = x - mean
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    var = s**2
    if var.sum() == 0:
        return data.copy()
    k = n_components_for(var / var.sum(), variance_threshold)
    basis = vt[:k]
    return data.with_values(xc @ basis.T @ basis + mean)
