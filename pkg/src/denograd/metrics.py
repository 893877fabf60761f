"""Scores, distribution comparisons and the Bayesian signed-rank test."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import DataMatrix


class MetricError(ValueError):
    pass


def _pair(y_true, y_pred):
    a = np.asarray(y_true, dtype=float).ravel()
    b = np.asarray(y_pred, dtype=float).ravel()
    if a.shape != b.shape:
        raise MetricError(f"length mismatch: {a.shape} vs {b.shape}")
    return a, b


def r2_score(y_true, y_pred) -> float:
    y, p = _pair(y_true, y_pred)
    if len(y) < 2:
        raise MetricError("R2 needs at least two points")
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise MetricError("R2 undefined for a zero-variance target")
    return float(1.0 - np.sum((y - p) ** 2) / ss_tot)


def smape(y_true, y_pred) -> float:
    y, p = _pair(y_true, y_pred)
    num = 2.0 * np.abs(p - y)
    den = np.abs(y) + np.abs(p)
    terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(100.0 * terms.mean())


@dataclass
class MetricBundle:
    r2: float
    r2_clipped: float
    mse: float
    rmse: float
    mae: float
    smape: float

    def as_dict(self):
        return asdict(self)


def error_metrics(y_true, y_pred) -> MetricBundle:
    y, p = _pair(y_true, y_pred)
    if len(y) == 0:
        raise MetricError("no points to score")
    mse = float(np.mean((y - p) ** 2))
    try:
        r2 = r2_score(y, p)
    except MetricError:
        r2 = math.nan
    return MetricBundle(
        r2=r2,
        r2_clipped=max(r2, 0.0) if not math.isnan(r2) else math.nan,
        mse=mse,
        rmse=math.sqrt(mse),
        mae=float(np.mean(np.abs(y - p))),
        smape=smape(y, p),
    )


# -- distribution comparisons ----------------------------------------------------


def kl_histogram(p_sample, q_sample, bins: int = 50, eps: float = 1e-10) -> float:
    """KL(P||Q) from equal-width histograms over the shared range of both samples."""
    p_sample = np.asarray(p_sample, dtype=float)
    q_sample = np.asarray(q_sample, dtype=float)
    if len(p_sample) == 0 or len(q_sample) == 0:
        raise MetricError("empty sample")
    lo = min(p_sample.min(), q_sample.min())
    hi = max(p_sample.max(), q_sample.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    p, _ = np.histogram(p_sample, bins=edges)
    q, _ = np.histogram(q_sample, bins=edges)
    p = (p + eps) / (p + eps).sum()
    q = (q + eps) / (q + eps).sum()
    return float(max(np.sum(p * np.log(p / q)), 0.0))


def kl_divergence(p_data: DataMatrix, q_data: DataMatrix, bins: int = 50) -> dict:
    """Per-column histogram KL(P||Q); returns ``{"kl_per_variable": {...}, "kl_mean": float}``."""
    if p_data.columns != q_data.columns:
        raise MetricError(f"column mismatch: {p_data.columns} vs {q_data.columns}")
    per = {c: kl_histogram(p_data.values[:, j], q_data.values[:, j], bins)
           for j, c in enumerate(p_data.columns)}
    return {"kl_per_variable": per, "kl_mean": float(np.mean(list(per.values())))}


def correlation_difference(a: DataMatrix, b: DataMatrix) -> dict:
    """|mean(C_a) - mean(C_b)| and mean(|C_a - C_b|) of Pearson correlation matrices.

    Columns constant in either input are dropped from both and listed under
    ``excluded``.
    """
    if a.columns != b.columns:
        raise MetricError(f"column mismatch: {a.columns} vs {b.columns}")
    keep = (a.values.std(axis=0) > 0) & (b.values.std(axis=0) > 0)
    excluded = [c for c, k in zip(a.columns, keep) if not k]
    if keep.sum() < 2:
        raise MetricError("need at least two non-constant columns")
    ca = np.corrcoef(a.values[:, keep], rowvar=False)
    cb = np.corrcoef(b.values[:, keep], rowvar=False)
    return {
        "corr_diff": float(abs(ca.mean() - cb.mean())),
        "corr_diff_elementwise_mean": float(np.mean(np.abs(ca - cb))),
        "excluded": excluded,
    }


@dataclass
class DistributionReport:
    kl_per_variable: dict
    kl_mean: float
    corr_diff: float
    corr_diff_elementwise_mean: float
    excluded: list = field(default_factory=list)


def distribution_report(noisy: DataMatrix, denoised: DataMatrix, bins: int = 50) -> DistributionReport:
    kl = kl_divergence(noisy, denoised, bins)
    cd = correlation_difference(noisy, denoised)
    return DistributionReport(kl["kl_per_variable"], kl["kl_mean"], cd["corr_diff"],
                              cd["corr_diff_elementwise_mean"], cd["excluded"])


def normalized_mse(a: DataMatrix, reference: DataMatrix) -> float:
    """Mean over columns of MSE(a, reference) / var(reference column)."""
    if a.columns != reference.columns:
        raise MetricError(f"column mismatch: {a.columns} vs {reference.columns}")
    sd = reference.values.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return float(np.mean(((a.values - reference.values) / sd) ** 2))


# -- Bayesian signed-rank test ---------------------------------------------------------


@dataclass
class BayesOutcome:
    p_left: float
    p_rope: float
    p_right: float
    rope_halfwidth: float
    samples: int


def signed_rank_posterior(d, rope: float = 0.01, samples: int = 50000, seed: int = 0,
                          prior_strength: float = 1.0) -> np.ndarray:
    """Sampled (left, rope, right) posterior masses, shape (samples, 3).

    ``d`` is augmented with one pseudo-observation at 0. For each Dirichlet
    draw w, the mass of Walsh averages (d_i + d_j)/2 in each region is the
    sum of w_i * w_j over the pairs falling there.
    """
    if rope < 0:
        raise MetricError("rope must be >= 0")
    d = np.concatenate([[0.0], np.asarray(d, dtype=float).ravel()])
    walsh = 0.5 * (d[:, None] + d[None, :])
    left = (walsh < -rope).astype(float)
    right = (walsh > rope).astype(float)
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.full(len(d), prior_strength), size=samples)
    p_left = np.einsum("si,ij,sj->s", w, left, w)
    p_right = np.einsum("si,ij,sj->s", w, right, w)
    return np.column_stack([p_left, 1.0 - p_left - p_right, p_right])


def bayes_signed_rank(scores_a, scores_b, rope: float = 0.01, samples: int = 50000, seed: int = 0) -> BayesOutcome:
    """Posterior probabilities that a - b lies left of, inside, or right of the rope.

    Reported as the fraction of posterior draws in which each region holds
    the largest mass.
    """
    a, b = _pair(scores_a, scores_b)
    if len(a) < 2:
        raise MetricError("need at least two paired scores")
    if samples < 1:
        raise MetricError("samples must be positive")
    post = signed_rank_posterior(a - b, rope, samples, seed)
    winners = np.bincount(np.argmax(post, axis=1), minlength=3) / samples
    return BayesOutcome(float(winners[0]), float(winners[1]), float(winners[2]), rope, samples)


# -- underperformance filter -------------------------------------------------------------


@dataclass
class FilterVerdict:
    denoiser: str
    flagged: int
    cells: int
    discarded: bool
    flagged_cells: list = field(default_factory=list)

    @property
    def rate(self):
        return self.flagged / self.cells if self.cells else 0.0


def underperformance_filter(scores: dict, baselines: dict, threshold_ratio: float = 0.8,
                            max_flag_rate: float = 0.5) -> dict:
    """Flag cells below ``threshold_ratio`` x baseline; discard denoisers flagged in > half their cells.

    ``scores`` maps (denoiser, dataset, model) -> score for the
    train:denoised / test:noisy setting; ``baselines`` maps (dataset, model)
    -> the train:noisy / test:noisy score. Scores are compared as given, so
    pass clipped R2 for the floored comparison.
    """
    per = defaultdict(list)
    for (den, ds, model), score in scores.items():
        per[den].append(((ds, model), score))
    missing = sorted({cell for cells in per.values() for cell, _ in cells} - set(baselines))
    if missing:
        raise MetricError(f"missing baseline cells: {missing}")
    verdicts = {}
    for den in sorted(per):
        flagged = [cell for cell, s in sorted(per[den]) if not s >= threshold_ratio * baselines[cell]]
        n = len(per[den])
        verdicts[den] = FilterVerdict(den, len(flagged), n, len(flagged) / n > max_flag_rate, flagged)
    return verdicts
