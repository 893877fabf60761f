"""Train x test stage grid across denoisers and interpretable models."""

from __future__ import annotations

import hashlib
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..backbone import BackboneConfig
from ..baselines import (DAEConfig, DenoisingAutoencoder, DNResNet, DNResNetConfig, EMDParams, KalmanParams,
                         WaveletParams, emd_denoise, kalman_denoise, moving_average, pca_denoise, wavelet_denoise)
from ..data import Dataset, NoiseSpec, add_gaussian_noise, make_supervised, split
from ..denoise import DenoGrad, DenoGradConfig, DenoiseReport
from ..interpretable import ModelSpec
from ..metrics import (BayesOutcome, DistributionReport, bayes_signed_rank, distribution_report, error_metrics,
                       normalized_mse, underperformance_filter)

log = logging.getLogger(__name__)

DENOISERS = ("denograd", "ma", "kalman", "pca", "wavelet", "emd", "dae", "dnresnet")
NEURAL = ("denograd", "dae", "dnresnet")
STATIC_MODELS = ("ridge", "pls", "tree", "svr", "knn")
TS_MODELS = STATIC_MODELS + ("ar",)
METRICS = ("r2", "r2_clipped", "mse", "rmse", "mae", "smape")


class ScenarioError(RuntimeError):
    pass


# -- seeds ---------------------------------------------------------------------------

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_seed(master: int, *labels) -> int:
    """Order-insensitive per-task seed: splitmix64 of the master seed xor a hash of the labels."""
    digest = hashlib.blake2b("\x1f".join(map(str, labels)).encode(), digest_size=8).digest()
    return splitmix64((int(master) & _MASK) ^ int.from_bytes(digest, "little")) >> 1


# -- configuration -------------------------------------------------------------------


@dataclass
class RunConfig:
    seed: int = 0
    sigma: float = 0.1
    relative_noise: bool = True
    noise_columns: list[str] | None = None
    test_fraction: float = 0.2
    denograd: DenoGradConfig = field(default_factory=DenoGradConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    ma_window: int = 5
    pca_variance: float = 0.95
    emd_discard: int = 2
    kalman: KalmanParams = field(default_factory=KalmanParams)
    kl_bins: int = 50
    workers: int = 1
    repeats: int = 1


# -- denoiser adapters ---------------------------------------------------------------


class _Function:
    """Stateless column-wise/whole-matrix denoiser applied to each split on its own."""

    def __init__(self, fn):
        self.fn = fn

    def fit(self, train: Dataset):
        return self

    def transform(self, ds: Dataset):
        return ds.with_matrix(self.fn(ds.matrix), stage="denoised"), None


class _Learned:
    def __init__(self, denoiser):
        self.denoiser = denoiser

    def fit(self, train: Dataset):
        self.denoiser.fit(train.matrix)
        return self

    def transform(self, ds: Dataset):
        return ds.with_matrix(self.denoiser.transform(ds.matrix), stage="denoised"), None


def make_denoiser(name: str, config: RunConfig, seed: int):
    backbone = replace(config.backbone, seed=seed)
    if name == "denograd":
        return DenoGrad(config.denograd, backbone)
    if name == "ma":
        return _Function(lambda m: moving_average(m, config.ma_window))
    if name == "kalman":
        return _Function(lambda m: kalman_denoise(m, config.kalman))
    if name == "pca":
        return _Function(lambda m: pca_denoise(m, config.pca_variance))
    if name == "wavelet":
        return _Function(lambda m: wavelet_denoise(m, WaveletParams()))
    if name == "emd":
        return _Function(lambda m: emd_denoise(m, params=EMDParams(discard_imfs=config.emd_discard)))
    if name == "dae":
        return _Learned(DenoisingAutoencoder(DAEConfig(training=backbone)))
    if name == "dnresnet":
        return _Learned(DNResNet(DNResNetConfig(training=backbone)))
    raise ScenarioError(f"unknown denoiser {name!r}; choose from {DENOISERS}")


# -- results -------------------------------------------------------------------------


@dataclass
class ScenarioSpec:
    dataset: str
    denoiser: str
    model: str
    train_stage: str
    test_stage: str
    seed: int = 0

    @property
    def key(self):
        return (self.dataset, self.denoiser, self.model, self.train_stage, self.test_stage)


@dataclass
class ScenarioResult:
    spec: ScenarioSpec
    metrics: dict | None = None
    distribution: DistributionReport | None = None
    denoise_report: DenoiseReport | None = None
    wall_time: float = 0.0
    status: str = "ok"
    reason: str = ""

    @property
    def ok(self):
        return self.status == "ok"


@dataclass
class DenoiserOutcome:
    """Per (dataset, denoiser) denoising quality, independent of the downstream models."""

    dataset: str
    denoiser: str
    split: str
    distribution: DistributionReport | None = None
    report: DenoiseReport | None = None
    nmse_noisy: float | None = None
    nmse_denoised: float | None = None
    wall_time: float = 0.0
    status: str = "ok"
    reason: str = ""

    @property
    def mse_ratio(self):
        if self.nmse_noisy in (None, 0) or self.nmse_denoised is None:
            return None
        return self.nmse_denoised / self.nmse_noisy


@dataclass
class MatrixRun:
    results: list[ScenarioResult]
    outcomes: list[DenoiserOutcome]

    @property
    def failed(self):
        return [r for r in self.results if not r.ok]


# -- dataset preparation ---------------------------------------------------------------


@dataclass
class PreparedDataset:
    name: str
    stages: dict  # stage -> (train Dataset, test Dataset)
    synthetic: bool


def prepare_dataset(ds: Dataset, config: RunConfig) -> PreparedDataset:
    """Split, then add noise to each split of a clean synthetic dataset."""
    seed = derive_seed(config.seed, ds.name, "split")
    train, test = split(ds, config.test_fraction, seed)
    if ds.stage == "original":
        stages = {"original": (train, test)}
        noisy = []
        for part, tag in ((train, "train"), (test, "test")):
            spec = NoiseSpec(config.sigma, seed=derive_seed(config.seed, ds.name, "noise", tag),
                             relative=config.relative_noise)
            noisy.append(add_gaussian_noise(part, spec, config.noise_columns))
        stages["noisy"] = tuple(noisy)
        return PreparedDataset(ds.name, stages, True)
    if ds.stage != "noisy":
        raise ScenarioError(f"{ds.name}: cannot run the matrix on a {ds.stage!r} dataset")
    if ds.clean is not None:
        # noisy data shipped with its clean twin: the original stage is available too
        original = tuple(replace(p, matrix=p.clean, stage="original") for p in (train, test))
        return PreparedDataset(ds.name, {"original": original, "noisy": (train, test)}, True)
    return PreparedDataset(ds.name, {"noisy": (train, test)}, False)


# -- supervised views --------------------------------------------------------------------


def supervised(ds: Dataset):
    """(X, y) for the interpretable models; time series pair row t with the target at t + horizon."""
    if ds.kind == "timeseries":
        x, y = make_supervised(ds.matrix, ds.target, ds.horizon)
        return x.values, y
    return ds.matrix.select(ds.features).values, ds.matrix.column(ds.target)


def _fit(model: str, train: Dataset, seed: int):
    """Fit ``model`` on a train stage; returns ``score(test) -> (y_true, y_pred)``."""
    spec = ModelSpec(model)
    if model == "ar":
        if train.kind != "timeseries":
            raise ScenarioError("the AR model needs a time series dataset")
        fitted = spec.fit(None, train.matrix.column(train.target), seed=seed)

        def score(test):
            series = test.matrix.column(test.target)
            return series[fitted.order:], fitted.predict(series)

        return score
    x, y = supervised(train)
    fitted = spec.fit(x, y, seed=seed)

    def score(test):
        xt, yt = supervised(test)
        return yt, fitted.predict(xt)

    return score


def _fit_task(prep, model, train_stage, train, seed):
    t0 = time.perf_counter()
    try:
        return _fit(model, train, seed), None, time.perf_counter() - t0
    except Exception as exc:  # noqa: BLE001 - recorded on the cells
        log.warning("%s/%s train:%s failed: %s", prep.name, model, train_stage, exc)
        return None, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0


# -- the matrix --------------------------------------------------------------------------


def denoise_prepared(prep: PreparedDataset, name: str, config: RunConfig):
    """Fit one denoiser on the noisy train split and apply it to both splits.

    Returns ``(parts, outcomes, reason)``: the denoised (train, test) datasets
    or None on failure, per-split DenoiserOutcome records, and the failure
    reason (None on success).
    """
    seed = derive_seed(config.seed, prep.name, name)
    train, test = prep.stages["noisy"]
    t0 = time.perf_counter()
    outcomes = []
    try:
        den = make_denoiser(name, config, seed).fit(train)
        parts = []
        for part, tag in ((train, "train"), (test, "test")):
            t1 = time.perf_counter()
            d, rep = den.transform(part)
            parts.append(d)
            oc = DenoiserOutcome(prep.name, name, tag, report=rep)
            oc.distribution = distribution_report(part.matrix, d.matrix, config.kl_bins)
            if part.clean is not None:
                oc.nmse_noisy = normalized_mse(part.matrix, part.clean)
                oc.nmse_denoised = normalized_mse(d.matrix, part.clean)
            oc.wall_time = time.perf_counter() - t1
            outcomes.append(oc)
        return tuple(parts), outcomes, None
    except Exception as exc:  # noqa: BLE001 - a failing denoiser must not abort the matrix
        log.warning("%s/%s failed: %s", prep.name, name, exc)
        reason = f"{type(exc).__name__}: {exc}"
        fail = [DenoiserOutcome(prep.name, name, tag, status="failed", reason=reason,
                                wall_time=time.perf_counter() - t0) for tag in ("train", "test")]
        return None, fail, reason


def _cells(prep, denoiser, model, train_stage, fit, tests, outcome, denoise_reason, seed):
    """Score one fitted model on every test stage."""
    score, error, elapsed = fit
    cells = []
    for test_stage in ("original", "noisy", "denoised"):
        if test_stage != "denoised" and test_stage not in prep.stages:
            continue
        res = ScenarioResult(ScenarioSpec(prep.name, denoiser, model, train_stage, test_stage, seed),
                             wall_time=elapsed)
        if "denoised" in (train_stage, test_stage):
            oc = outcome.get("train" if train_stage == "denoised" else "test")
            if oc is not None:
                res.distribution, res.denoise_report = oc.distribution, oc.report
        if "denoised" in (train_stage, test_stage) and denoise_reason is not None:
            res.status, res.reason = "failed", denoise_reason
        elif error is not None:
            res.status, res.reason = "failed", error
        else:
            t0 = time.perf_counter()
            try:
                res.metrics = error_metrics(*score(tests[test_stage])).as_dict()
            except Exception as exc:  # noqa: BLE001
                res.status, res.reason = "failed", f"{type(exc).__name__}: {exc}"
            res.wall_time += time.perf_counter() - t0
        cells.append(res)
    return cells


def run_matrix(datasets, denoisers=DENOISERS, models=None, config: RunConfig | None = None) -> MatrixRun:
    """Run every (dataset, denoiser, model, train stage, test stage) cell.

    ``datasets`` are clean synthetic datasets (stage ``original``, noise is
    injected here) or real ones (stage ``noisy``). Synthetic data give a 3x3
    stage grid, real data 2x2. Failing components mark their cells failed
    without stopping the run.
    """
    config = config or RunConfig()
    for d in denoisers:
        if d not in DENOISERS:
            raise ScenarioError(f"unknown denoiser {d!r}; choose from {DENOISERS}")
    results, outcomes = [], []
    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    mapper = pool.map if pool else map
    try:
        for ds in datasets:
            prep = prepare_dataset(ds, config)
            kind_models = TS_MODELS if ds.kind == "timeseries" else STATIC_MODELS
            ds_models = [m for m in (models or kind_models) if m != "ar" or ds.kind == "timeseries"]
            denoised = dict(zip(denoisers, mapper(lambda n: denoise_prepared(prep, n, config), denoisers)))

            # fits on original/noisy training data do not depend on the denoiser: fit once
            fit_jobs = [(m, st, None) for m in ds_models for st in prep.stages]
            fit_jobs += [(m, "denoised", d) for d in denoisers if denoised[d][0] is not None for m in ds_models]

            def fit_job(job):
                model, train_stage, den = job
                labels = (prep.name, model, train_stage) + ((den,) if den else ())
                train = denoised[den][0][0] if den else prep.stages[train_stage][0]
                return _fit_task(prep, model, train_stage, train, derive_seed(config.seed, *labels))

            fits = dict(zip(fit_jobs, mapper(fit_job, fit_jobs)))

            cell_jobs = []
            for den in denoisers:
                parts, ocs, reason = denoised[den]
                outcomes.extend(ocs)
                tests = {st: pair[1] for st, pair in prep.stages.items()}
                if parts is not None:
                    tests["denoised"] = parts[1]
                by_split = {oc.split: oc for oc in ocs if oc.status == "ok"}
                for model in ds_models:
                    for train_stage in (*prep.stages, "denoised"):
                        key = (model, train_stage, den if train_stage == "denoised" else None)
                        labels = (prep.name, *key[:2]) + ((den,) if key[2] else ())
                        fit = fits.get(key, (None, reason, 0.0))
                        cell_jobs.append((den, model, train_stage, fit, tests, by_split, reason,
                                          derive_seed(config.seed, *labels)))

            for cells in mapper(lambda job: _cells(prep, *job), cell_jobs):
                results.extend(cells)
    finally:
        if pool:
            pool.shutdown()
    results.sort(key=lambda r: _sort_key(r.spec.key))
    outcomes.sort(key=lambda o: (o.dataset, o.denoiser, o.split))
    return MatrixRun(results, outcomes)


_STAGE_ORDER = {"original": 0, "noisy": 1, "denoised": 2}


def _sort_key(key):
    ds, den, model, tr, te = key
    return (ds, den, model, _STAGE_ORDER[tr], _STAGE_ORDER[te])


def aggregate_repeats(runs: list[MatrixRun]) -> MatrixRun:
    """Mean and sample sd per cell metric across repeated runs (``<metric>_sd``)."""
    if len(runs) == 1:
        return runs[0]
    merged = []
    for cells in zip(*(r.results for r in runs)):
        base = cells[0]
        ok = [c for c in cells if c.ok]
        res = replace(base, wall_time=sum(c.wall_time for c in cells))
        if not ok:
            merged.append(res)
            continue
        res.status, res.reason = "ok", ""
        m = {}
        for name in METRICS:
            vals = np.array([c.metrics[name] for c in ok], dtype=float)
            m[name] = float(np.mean(vals))
            m[name + "_sd"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        res.metrics = m
        merged.append(res)
    return MatrixRun(merged, [o for r in runs for o in r.outcomes])


def run_repeated(datasets, denoisers=DENOISERS, models=None, config: RunConfig | None = None) -> MatrixRun:
    config = config or RunConfig()
    runs = []
    for r in range(config.repeats):
        cfg = config if r == 0 else replace(config, seed=derive_seed(config.seed, "repeat", r))
        runs.append(run_matrix(datasets, denoisers, models, cfg))
    return aggregate_repeats(runs)


# -- comparisons -------------------------------------------------------------------------


def _scores(results, denoiser, stage_pair, metric):
    tr, te = stage_pair
    return {
        (r.spec.dataset, r.spec.model): r.metrics[metric]
        for r in results
        if r.ok and r.spec.denoiser == denoiser and r.spec.train_stage == tr and r.spec.test_stage == te
    }


def compare_denoisers(results, method_a: str, method_b: str, rope: float = 0.01, seed: int = 0,
                      stage_pair=("denoised", "denoised"), metric: str = "r2", samples: int = 50000) -> BayesOutcome:
    """Bayesian signed-rank comparison of two denoisers over shared (dataset, model) cells."""
    a = _scores(results, method_a, stage_pair, metric)
    b = _scores(results, method_b, stage_pair, metric)
    missing = sorted(set(a) ^ set(b))
    if missing:
        raise ScenarioError(f"cells present for only one method: {missing}")
    keys = sorted(a)
    if len(keys) < 2:
        raise ScenarioError(f"need at least two shared cells, found {len(keys)}")
    return bayes_signed_rank([a[k] for k in keys], [b[k] for k in keys], rope, samples, seed)


def filter_verdicts(results, threshold_ratio: float = 0.8, clipped: bool = True):
    """Underperformance verdicts for train:denoised/test:noisy against train:noisy/test:noisy."""
    metric = "r2_clipped" if clipped else "r2"
    scores, baselines = {}, {}
    for r in results:
        s = r.spec
        value = r.metrics[metric] if r.ok else math.nan
        if s.train_stage == "denoised" and s.test_stage == "noisy":
            scores[(s.denoiser, s.dataset, s.model)] = value
        elif s.train_stage == "noisy" and s.test_stage == "noisy":
            baselines[(s.dataset, s.model)] = value
    return underperformance_filter(scores, baselines, threshold_ratio)
