"""Gradient-based instance denoising.

A frozen regression network acts as a critic. Rows whose prediction error
exceeds a threshold are moved a fixed step at a time against the gradient of
their loss with respect to the inputs (and, for tabular data, the target).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .backbone import BackboneConfig, BackboneModel, train_backbone
from .data import DataMatrix, Dataset, Standardizer, make_windows

log = logging.getLogger(__name__)


class DenoiseError(RuntimeError):
    pass


@dataclass
class DenoGradConfig:
    """``noise_threshold=None`` means: derive it from the training residuals."""

    noise_threshold: float | None = None
    reduction_rate: float = 0.05
    max_epochs: int = 200
    zero_norm_epsilon: float = 1e-12
    threshold_factor: float = 0.5

    def __post_init__(self):
        if self.noise_threshold is not None and not self.noise_threshold >= 0:
            raise ValueError("noise_threshold must be >= 0")
        if not self.reduction_rate > 0:
            raise ValueError("reduction_rate must be > 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not self.zero_norm_epsilon > 0:
            raise ValueError("zero_norm_epsilon must be > 0")


@dataclass
class DenoiseReport:
    epochs_run: int = 0
    instances_touched: int = 0
    final_noisy_count: int = 0
    per_epoch_noisy_counts: list[int] = field(default_factory=list)


def robust_threshold(model: BackboneModel, x, y, factor: float = 0.5) -> float:
    """``factor`` x MAD-based scale (MAD * 1.4826) of the model's residuals."""
    y = np.asarray(y, dtype=float).reshape(len(x), -1)
    resid = (model.predict(x) - y).mean(axis=1)
    mad = np.median(np.abs(resid - np.median(resid)))
    return float(factor * 1.4826 * mad)


def _row_error(pred, y):
    return np.abs(pred - y).mean(axis=1)


def _check_finite(arr, rows, epoch, what):
    bad = ~np.isfinite(arr.reshape(len(arr), -1)).all(axis=1)
    if bad.any():
        raise DenoiseError(f"non-finite {what} at epoch {epoch}, row {int(rows[np.argmax(bad)])}")


def _threshold(config):
    if config.noise_threshold is None:
        raise DenoiseError("noise_threshold is unset; fit a DenoGrad pipeline or pass a value")
    return config.noise_threshold


def _loop(x, y, model, config, update_y):
    """Shared epoch loop. ``x`` is (n, input_dim), ``y`` is (n, output_dim); both edited in place."""
    thr = _threshold(config)
    eta = config.reduction_rate
    report = DenoiseReport()
    touched = np.zeros(len(x), dtype=bool)
    # a row that is not updated keeps its error, so only rows flagged in the
    # previous epoch can still be noisy
    active = np.arange(len(x))
    for epoch in range(config.max_epochs):
        xa, ya = x[active], y[active]
        pre = model._forward(xa)
        _check_finite(pre[-1], active, epoch, "prediction")
        noisy = _row_error(pre[-1], ya) > thr
        report.per_epoch_noisy_counts.append(int(noisy.sum()))
        report.epochs_run = epoch + 1
        active = active[noisy]
        if not len(active):
            break
        xa, ya = xa[noisy], ya[noisy]
        pre = [p[noisy] for p in pre]
        dout = 2.0 * (pre[-1] - ya) / model.output_dim
        gx, _, _ = model._backward(xa, pre, dout, want_params=False)
        sq = np.sum(gx**2, axis=1)
        if update_y:
            gy = -dout
            sq = sq + np.sum(gy**2, axis=1)
        norm = np.sqrt(sq)
        norm = np.where(norm == 0, config.zero_norm_epsilon, norm)[:, None]
        x[active] = xa - eta * gx / norm
        _check_finite(x[active], active, epoch, "inputs")
        if update_y:
            y[active] = ya - eta * gy / norm
            _check_finite(y[active], active, epoch, "targets")
        touched[active] = True
    if len(active):
        report.final_noisy_count = int(np.sum(_row_error(model.predict(x[active]), y[active]) > thr))
    report.instances_touched = int(touched.sum())
    return report


def denoise_tabular(x, y, model: BackboneModel, config: DenoGradConfig):
    """Denoise static rows; returns ``(x', y', report)``.

    Per epoch: forward pass, flag rows whose mean absolute error exceeds the
    threshold, and step only the flagged rows by ``reduction_rate`` along the
    negative unit gradient of their loss w.r.t. the concatenated (x, y).
    """
    if not model.trained:
        raise DenoiseError("backbone model is not trained")
    x = np.array(x, dtype=float)
    y = np.array(y, dtype=float)
    squeeze = y.ndim == 1
    if squeeze:
        y = y.reshape(-1, 1)
    if x.ndim != 2 or x.shape[1] != model.input_dim or y.shape != (x.shape[0], model.output_dim):
        raise DenoiseError(
            f"x{x.shape}, y{y.shape} do not fit a model with "
            f"{model.input_dim} inputs and {model.output_dim} outputs"
        )
    report = _loop(x, y, model, config, update_y=True)
    return x, (y[:, 0] if squeeze else y), report


def overlapping_window_merge(windows, stride: int) -> np.ndarray:
    """Average overlapping windows (n, window, vars) back into a (length, vars) series."""
    windows = np.asarray(windows, dtype=float)
    if windows.ndim != 3:
        raise DenoiseError(f"expected (n, window, vars) windows, got shape {windows.shape}")
    n, w, v = windows.shape
    if stride < 1 or stride > w:
        raise DenoiseError(f"stride {stride} leaves gaps between windows of length {w}")
    length = (n - 1) * stride + w
    # average deviations from the first window covering each cell, so cells
    # on which all windows agree come back bit-exact
    ref = np.empty((length, v))
    for i in range(n - 1, -1, -1):
        ref[i * stride:i * stride + w] = windows[i]
    total = np.zeros((length, v))
    count = np.zeros((length, 1))
    for i in range(n):
        total[i * stride:i * stride + w] += windows[i] - ref[i * stride:i * stride + w]
        count[i * stride:i * stride + w] += 1
    return ref + total / count


def denoise_timeseries(windows, targets, model: BackboneModel, config: DenoGradConfig, target_col: int,
                       horizon: int, stride: int = 1, tail=None, columns=None):
    """Denoise windowed series; returns ``(series, report)``.

    Only the windows move: the loss gradient w.r.t. the forecast target is
    discarded, so ``targets`` stay fixed during the loop. Windows are
    normalized individually and merged by averaging overlapping cells.
    ``tail`` holds the trailing rows no window covers (they only occur as
    targets) and is appended unchanged. Use
    :func:`denograd.data.make_supervised` on the result to rebuild (X, y).
    """
    if not model.trained:
        raise DenoiseError("backbone model is not trained")
    windows = np.array(windows, dtype=float)
    if windows.ndim != 3:
        raise DenoiseError(f"expected (n, window, vars) windows, got shape {windows.shape}")
    n, w, v = windows.shape
    if w * v != model.input_dim:
        raise DenoiseError(f"windows of {w}x{v} do not match model input_dim {model.input_dim}")
    if not 0 <= target_col < v:
        raise DenoiseError(f"target column {target_col} out of range for {v} variables")
    targets = np.asarray(targets, dtype=float).reshape(n, -1)
    tail = np.zeros((0, v)) if tail is None else np.asarray(tail, dtype=float).reshape(-1, v)
    length = (n - 1) * stride + w + len(tail)
    if horizon < 1 or horizon >= length:
        raise DenoiseError(f"horizon {horizon} must lie in [1, {length})")
    flat = windows.reshape(n, w * v)
    report = _loop(flat, targets, model, config, update_y=False)
    merged = overlapping_window_merge(flat.reshape(n, w, v), stride)
    series = np.vstack([merged, tail])
    names = list(columns) if columns is not None else [f"v{i}" for i in range(v)]
    return DataMatrix(series, names), report


class DenoGrad:
    """Fit-once, denoise-many wrapper handling standardization and the backbone.

    ``fit`` trains the backbone on a (noisy) training split; ``transform``
    denoises any split with that frozen model in standardized units and
    returns the de-standardized result.
    """

    def __init__(self, config: DenoGradConfig | None = None, backbone: BackboneConfig | None = None):
        self.config = config or DenoGradConfig()
        self.backbone_config = backbone or BackboneConfig()
        self.model: BackboneModel | None = None
        self.scaler: Standardizer | None = None
        self.threshold: float | None = None

    def fit(self, train: Dataset) -> "DenoGrad":
        self.scaler = Standardizer.fit(train.matrix)
        z = self.scaler.transform(train.matrix)
        ts = train.kind == "timeseries"
        x, y = self._xy(train, z)
        self.model = train_backbone(x, y, self.backbone_config, chronological=ts)
        if self.config.noise_threshold is None:
            self.threshold = robust_threshold(self.model, x, y, self.config.threshold_factor)
        else:
            self.threshold = self.config.noise_threshold
        log.info("backbone trained for %d epochs, threshold %.4g",
                 len(self.model.train_loss_history), self.threshold)
        return self

    def _xy(self, ds, z):
        if ds.kind == "timeseries":
            wins, y = make_windows(ds.with_matrix(z))
            return wins.reshape(len(wins), -1), y.reshape(-1, 1)
        feats = ds.features
        return z.select(feats).values, z.column(ds.target).reshape(-1, 1)

    @property
    def resolved_config(self) -> DenoGradConfig:
        if self.threshold is None:
            raise DenoiseError("DenoGrad pipeline is not fitted")
        c = self.config
        return DenoGradConfig(self.threshold, c.reduction_rate, c.max_epochs, c.zero_norm_epsilon,
                              c.threshold_factor)

    def transform(self, ds: Dataset) -> tuple[Dataset, DenoiseReport]:
        cfg = self.resolved_config
        z = self.scaler.transform(ds.matrix)
        if ds.kind == "timeseries":
            wins, y = make_windows(ds.with_matrix(z))
            covered = (len(wins) - 1) * ds.stride + ds.window
            out, report = denoise_timeseries(
                wins, y, self.model, cfg, z.index(ds.target), ds.horizon, ds.stride,
                tail=z.values[covered:], columns=z.columns,
            )
        else:
            feats = ds.features
            x, y, report = denoise_tabular(z.select(feats).values, z.column(ds.target), self.model, cfg)
            values = z.values.copy()
            values[:, [z.index(c) for c in feats]] = x
            values[:, z.index(ds.target)] = y
            out = z.with_values(values)
        return ds.with_matrix(self.scaler.inverse(out), stage="denoised"), report
