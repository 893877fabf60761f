"""Datasets: synthetic generators, noise injection, splitting, windowing, CSV I/O."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

STAGES = ("original", "noisy", "denoised")
KINDS = ("static", "timeseries")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass
class DataMatrix:
    values: np.ndarray
    columns: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DataError(f"DataMatrix needs a 2-D array, got shape {self.values.shape}")
        self.columns = [str(c) for c in self.columns]
        if len(self.columns) != self.values.shape[1]:
            raise DataError(f"{len(self.columns)} column names for {self.values.shape[1]} columns")
        if len(set(self.columns)) != len(self.columns):
            raise DataError("duplicate column names")

    @property
    def shape(self):
        return self.values.shape

    def __len__(self):
        return self.values.shape[0]

    def index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise DataError(f"no column named {name!r}; have {self.columns}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def select(self, names) -> "DataMatrix":
        idx = [self.index(n) for n in names]
        return DataMatrix(self.values[:, idx], list(names))

    def rows(self, idx) -> "DataMatrix":
        return DataMatrix(self.values[idx], list(self.columns))

    def with_values(self, values) -> "DataMatrix":
        values = np.asarray(values, dtype=float)
        if values.shape != self.values.shape:
            raise DataError(f"shape {values.shape} does not match {self.values.shape}")
        return DataMatrix(values, list(self.columns))

    def copy(self) -> "DataMatrix":
        return DataMatrix(self.values.copy(), list(self.columns))


@dataclass
class Dataset:
    matrix: DataMatrix
    target: str
    kind: str = "static"
    window: int | None = None
    horizon: int | None = None
    stride: int = 1
    stage: str = "original"
    seed: int = 0
    name: str = "dataset"
    # clean twin, kept for synthetic data so errors to ground truth can be measured
    clean: DataMatrix | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.stage not in STAGES:
            raise DataError(f"stage must be one of {STAGES}, got {self.stage!r}")
        self.matrix.index(self.target)
        if self.kind == "timeseries":
            if self.window is None or self.horizon is None:
                raise DataError("time series datasets need window and horizon")
            if self.window < 1 or self.horizon < 1 or self.stride < 1:
                raise DataError("window, horizon and stride must be positive")
            if self.window + self.horizon > len(self.matrix):
                raise DataError(
                    f"window + horizon = {self.window + self.horizon} exceeds {len(self.matrix)} rows"
                )
        if self.clean is not None and self.clean.shape != self.matrix.shape:
            raise DataError("clean twin must have the same shape as the data")

    @property
    def features(self) -> list[str]:
        return [c for c in self.matrix.columns if c != self.target]

    @property
    def has_clean(self) -> bool:
        return self.clean is not None

    def with_matrix(self, matrix: DataMatrix, stage: str | None = None) -> "Dataset":
        return replace(self, matrix=matrix, stage=stage or self.stage)

    def metadata(self) -> dict:
        return {
            "name": self.name,
            "target": self.target,
            "kind": self.kind,
            "window": self.window,
            "horizon": self.horizon,
            "stride": self.stride,
            "stage": self.stage,
            "seed": self.seed,
        }


# -- synthetic generators -------------------------------------------------------


def quartic(x):
    return x**4 - x**3 - 20 * x**2 - 20 * x + 6


def paraboloid(x0, x1):
    return x0**2 + x1**2


def sinus(t):
    return 0.05 * t + np.sin(2 * np.pi * t / 24)


def gen_quartic_2d(n: int = 10001, x_range=(-5.0, 5.0), seed: int = 0) -> Dataset:
    if n < 2:
        raise DataError("n must be >= 2")
    lo, hi = map(float, x_range)
    if not hi > lo:
        raise DataError(f"degenerate range {x_range}")
    x = np.linspace(lo, hi, n)
    m = DataMatrix(np.column_stack([x, quartic(x)]), ["x", "y"])
    return Dataset(m, "y", seed=seed, name="quartic_2d", clean=m.copy())


def _grid_shape(n):
    """Factor pair (a, b), a <= b, a * b == n, as close to square as possible."""
    a = int(math.isqrt(n))
    while n % a:
        a -= 1
    return a, n // a


def gen_paraboloid_3d(n: int = 3000, grid_range=(-2.0, 2.0), seed: int = 0) -> Dataset:
    """Regular grid over ``grid_range``**2 with exactly ``n`` nodes."""
    if n < 4:
        raise DataError("n must be >= 4")
    lo, hi = map(float, grid_range)
    if not hi > lo:
        raise DataError(f"degenerate range {grid_range}")
    a, b = _grid_shape(n)
    g0, g1 = np.meshgrid(np.linspace(lo, hi, a), np.linspace(lo, hi, b), indexing="ij")
    x0, x1 = g0.ravel(), g1.ravel()
    m = DataMatrix(np.column_stack([x0, x1, paraboloid(x0, x1)]), ["x0", "x1", "y"])
    return Dataset(m, "y", seed=seed, name="paraboloid_3d", clean=m.copy())


def gen_sinus(n: int = 1000, lags=(1, 6, 12), window: int = 24, horizon: int = 1, seed: int = 0) -> Dataset:
    """Trend plus daily-period sine; auxiliary channels are lagged copies of the clean signal."""
    if n < 2:
        raise DataError("n must be >= 2")
    t = np.arange(n, dtype=float)
    cols = [sinus(t - lag) for lag in lags] + [sinus(t)]
    names = [f"y_lag{lag}" for lag in lags] + ["y"]
    m = DataMatrix(np.column_stack(cols), names)
    return Dataset(m, "y", kind="timeseries", window=window, horizon=horizon,
                   seed=seed, name="sinus", clean=m.copy())


def gen_linear_combination_ts(window: int = 24, n_var: int = 5, n_samples: int = 1000, seed: int = 42,
                              horizon: int = 1) -> Dataset:
    """Each new row mixes the previous ``window`` rows, adds N(0, 0.1) and is L2-normalized.

    Uses the legacy global-state generator sequence (rand, rand, normal...) so a
    given seed reproduces the reference construction.
    """
    if window < 1 or n_var < 1:
        raise DataError("window and n_var must be >= 1")
    rng = np.random.RandomState(seed)
    x = 2 * rng.rand(window, n_var) - 1
    a = 2 * rng.rand(1, window) - 1
    rows = list(x)
    for _ in range(n_samples):
        recent = np.asarray(rows[-window:])
        new = a @ recent + rng.normal(0, 0.1, (1, n_var))
        new /= np.linalg.norm(new)
        rows.append(new[0])
    values = np.asarray(rows[window:], dtype=float)
    names = [f"v{i}" for i in range(n_var)]
    m = DataMatrix(values, names)
    return Dataset(m, names[-1], kind="timeseries", window=window, horizon=horizon,
                   seed=seed, name="linear_combination", clean=m.copy())


GENERATORS = {
    "quartic_2d": gen_quartic_2d,
    "paraboloid_3d": gen_paraboloid_3d,
    "sinus": gen_sinus,
    "linear_combination": gen_linear_combination_ts,
}


# -- noise ------------------------------------------------------------------------


@dataclass
class NoiseSpec:
    """Additive Gaussian noise.

    With ``relative`` set, column j receives noise of standard deviation
    ``sigma * sd(clean column j)``; otherwise ``sigma`` is absolute.
    """

    sigma: float
    mean: float = 0.0
    seed: int = 0
    relative: bool = True
    distribution: str = "gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise DataError("sigma must be > 0")
        if self.distribution != "gaussian":
            raise DataError(f"unsupported noise distribution {self.distribution!r}")


def add_gaussian_noise(ds: Dataset, spec: NoiseSpec, columns=None) -> Dataset:
    """Return a noisy copy of ``ds``; the input values become its clean twin."""
    clean = ds.clean if ds.clean is not None else ds.matrix
    names = list(columns) if columns is not None else list(ds.matrix.columns)
    idx = [ds.matrix.index(c) for c in names]
    scale = np.full(len(idx), spec.sigma)
    if spec.relative:
        sd = clean.values[:, idx].std(axis=0)
        scale = spec.sigma * np.where(sd > 0, sd, 1.0)
    rng = np.random.default_rng(spec.seed)
    values = ds.matrix.values.copy()
    values[:, idx] += spec.mean + rng.standard_normal((values.shape[0], len(idx))) * scale
    return replace(ds, matrix=ds.matrix.with_values(values), stage="noisy", clean=clean.copy())


# -- splitting / windowing --------------------------------------------------------


def split(ds: Dataset, test_fraction: float = 0.2, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Static data: seeded random permutation. Time series: chronological, last part is test."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(ds.matrix)
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n_test >= n:
        raise DataError(f"cannot split {n} rows with test_fraction={test_fraction}")
    if ds.kind == "timeseries":
        train_idx, test_idx = np.arange(n - n_test), np.arange(n - n_test, n)
    else:
        perm = np.random.default_rng(seed).permutation(n)
        train_idx, test_idx = perm[n_test:], perm[:n_test]

    def part(idx):
        clean = ds.clean.rows(idx) if ds.clean is not None else None
        return replace(ds, matrix=ds.matrix.rows(idx), clean=clean)

    return part(train_idx), part(test_idx)


def window_count(length: int, window: int, horizon: int, stride: int = 1) -> int:
    if window + horizon > length:
        return 0
    return (length - window - horizon) // stride + 1


def make_windows(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Sliding windows over all columns (target included) and the value ``horizon`` steps ahead.

    Returns ``x`` of shape (n_windows, window, n_vars) and ``y`` of shape (n_windows,).
    """
    if ds.kind != "timeseries":
        raise DataError("make_windows needs a time series dataset")
    values = ds.matrix.values
    count = window_count(len(values), ds.window, ds.horizon, ds.stride)
    if count < 1:
        raise DataError(f"window + horizon exceeds series length {len(values)}")
    starts = np.arange(count) * ds.stride
    x = np.stack([values[s:s + ds.window] for s in starts])
    y = ds.matrix.column(ds.target)[starts + ds.window + ds.horizon - 1]
    return x, y


def make_supervised(matrix: DataMatrix, target: str, horizon: int) -> tuple[DataMatrix, np.ndarray]:
    """Pair each row's non-target columns with the target ``horizon`` steps later."""
    if horizon >= len(matrix):
        raise DataError(f"horizon {horizon} >= series length {len(matrix)}")
    feats = [c for c in matrix.columns if c != target]
    x = matrix.select(feats).values[:-horizon]
    y = matrix.column(target)[horizon:]
    return DataMatrix(x, feats), y


# -- standardization --------------------------------------------------------------


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray
    columns: list[str]
    constant: list[str] = field(default_factory=list)

    @classmethod
    def fit(cls, matrix: DataMatrix) -> "Standardizer":
        mean = matrix.values.mean(axis=0)
        sd = matrix.values.std(axis=0)
        const = [c for c, s in zip(matrix.columns, sd) if s == 0]
        if const:
            log.warning("zero-variance columns left unscaled: %s", const)
        return cls(mean, np.where(sd > 0, sd, 1.0), list(matrix.columns), const)

    def _check(self, matrix):
        if matrix.columns != self.columns:
            raise DataError(f"columns {matrix.columns} do not match fitted {self.columns}")

    def transform(self, matrix: DataMatrix) -> DataMatrix:
        self._check(matrix)
        return matrix.with_values((matrix.values - self.mean) / self.scale)

    def inverse(self, matrix: DataMatrix) -> DataMatrix:
        self._check(matrix)
        return matrix.with_values(matrix.values * self.scale + self.mean)


def standardize(train: DataMatrix, *others: DataMatrix):
    """Z-score ``train`` and ``others`` with training statistics.

    Returns ``(standardizer, train_z, *others_z)``.
    """
    st = Standardizer.fit(train)
    return (st, st.transform(train), *(st.transform(o) for o in others))


# -- CSV ----------------------------------------------------------------------------


def save_csv(ds: Dataset | DataMatrix, path, metadata: bool = True):
    """Write a header-row CSV; floats use repr() so they round-trip exactly."""
    path = Path(path)
    matrix = ds.matrix if isinstance(ds, Dataset) else ds
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(matrix.columns)
        for row in matrix.values:
            w.writerow([repr(float(v)) for v in row])
    if metadata and isinstance(ds, Dataset):
        sidecar_path(path).write_text(json.dumps(ds.metadata(), indent=2, sort_keys=True))


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def read_matrix(path) -> DataMatrix:
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            parsed = []
            for col, cell in zip(header, row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}:{lineno}: column {col!r}: non-numeric value {cell!r}") from None
            rows.append(parsed)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return DataMatrix(np.asarray(rows), header)


def load_csv(path, target: str | None = None, kind: str | None = None, **meta) -> Dataset:
    """Load a CSV, merging any JSON sidecar; explicit arguments win over the sidecar."""
    matrix = read_matrix(path)
    side = sidecar_path(path)
    info = json.loads(side.read_text()) if side.exists() else {}
    info.update({k: v for k, v in meta.items() if v is not None})
    if target is not None:
        info["target"] = target
    if kind is not None:
        info["kind"] = kind
    if "target" not in info:
        raise DataError(f"{path}: no target column given")
    if info["target"] not in matrix.columns:
        raise DataError(f"{path}: target column {info['target']!r} not found in {matrix.columns}")
    info.setdefault("name", Path(path).stem)
    info.setdefault("stage", "noisy")
    if info.get("kind", "static") == "timeseries":
        info.setdefault("window", 24)
        info.setdefault("horizon", 1)
    info.setdefault("stride", 1)
    clean = None
    if info.get("clean"):
        clean = read_matrix(Path(path).with_name(info["clean"]))
        if clean.shape != matrix.shape or clean.columns != matrix.columns:
            raise DataError(f"{path}: clean twin {info['clean']} does not match the data layout")
    return Dataset(matrix, clean=clean, **{k: info[k] for k in
                                           ("target", "kind", "window", "horizon", "stride", "stage", "seed", "name")
                                           if k in info})
