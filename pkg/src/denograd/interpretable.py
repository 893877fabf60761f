"""Interpretable downstream regressors, implemented directly on numpy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("ridge", "pls", "tree", "svr", "knn", "ar")

DEFAULT_HYPERPARAMS = {
    "ridge": {"alpha": 1.0},
    "pls": {"n_components": 1},
    "tree": {"max_depth": 5},
    "svr": {"epsilon": 0.1, "c": 1.0},
    "knn": {"k": 5},
    "ar": {"order": 7},
}


class ModelError(ValueError):
    pass


def _xy(x, y):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    y = np.asarray(y, dtype=float).ravel()
    if len(x) != len(y):
        raise ModelError(f"x has {len(x)} rows but y has {len(y)}")
    if len(x) == 0:
        raise ModelError("empty training data")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ModelError("training data contains non-finite values")
    return x, y


def _as_2d(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 1) if x.ndim == 1 else x


# -- linear -----------------------------------------------------------------------


@dataclass
class LinearModel:
    coef: np.ndarray
    intercept: float

    def predict(self, x):
        return _as_2d(x) @ self.coef + self.intercept


def fit_ridge(x, y, alpha: float = 1.0) -> LinearModel:
    """Solve (Xc'Xc + alpha I) w = Xc'yc on centered data; the intercept is not penalized."""
    x, y = _xy(x, y)
    if alpha < 0:
        raise ModelError("alpha must be >= 0")
    xm, ym = x.mean(axis=0), y.mean()
    xc, yc = x - xm, y - ym
    a = xc.T @ xc + alpha * np.eye(x.shape[1])
    try:
        w = np.linalg.solve(a, xc.T @ yc)
    except np.linalg.LinAlgError as exc:
        raise ModelError(f"singular ridge system: {exc}") from exc
    return LinearModel(w, float(ym - xm @ w))


@dataclass
class PLSModel:
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    coef: np.ndarray  # regression vector in scaled-x units

    def predict(self, x):
        return ((_as_2d(x) - self.x_mean) / self.x_scale) @ self.coef + self.y_mean


def fit_pls1(x, y, n_components: int = 1, scale: bool = True) -> PLSModel:
    """NIPALS PLS1 with deflation; single-response so each component is one pass."""
    x, y = _xy(x, y)
    if n_components < 1:
        raise ModelError("n_components must be >= 1")
    ym = y.mean()
    if np.all(y == y[0]):
        raise ModelError("zero-variance target")
    xm = x.mean(axis=0)
    xs = x.std(axis=0) if scale else np.ones(x.shape[1])
    xs = np.where(xs > 0, xs, 1.0)
    e = (x - xm) / xs
    f = y - ym
    ws, ps, qs = [], [], []
    for _ in range(min(n_components, x.shape[1])):
        w = e.T @ f
        nw = np.linalg.norm(w)
        if nw <= 1e-14 * max(1.0, np.linalg.norm(e) * np.linalg.norm(f)):
            break
        w /= nw
        t = e @ w
        tt = t @ t
        p = e.T @ t / tt
        q = f @ t / tt
        e = e - np.outer(t, p)
        f = f - q * t
        ws.append(w)
        ps.append(p)
        qs.append(q)
    if not ws:
        return PLSModel(xm, xs, float(ym), np.zeros(x.shape[1]))
    w, p, q = np.array(ws).T, np.array(ps).T, np.array(qs)
    coef = w @ np.linalg.solve(p.T @ w, q)
    return PLSModel(xm, xs, float(ym), coef)


# -- regression tree ----------------------------------------------------------------


@dataclass
class RegressionTree:
    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)
    depth: list[int] = field(default_factory=list)

    def _add(self, value, depth):
        for lst, v in ((self.feature, -1), (self.threshold, np.nan), (self.left, -1), (self.right, -1),
                       (self.value, value), (self.depth, depth)):
            lst.append(v)
        return len(self.value) - 1

    @property
    def max_depth(self):
        return max(self.depth)

    @property
    def n_leaves(self):
        return sum(1 for f in self.feature if f < 0)

    def predict(self, x):
        x = _as_2d(x)
        node = np.zeros(len(x), dtype=int)
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left, right = np.asarray(self.left), np.asarray(self.right)
        while True:
            inner = feat[node] >= 0
            if not inner.any():
                break
            n = node[inner]
            go_left = x[inner, feat[n]] <= thr[n]
            node[inner] = np.where(go_left, left[n], right[n])
        return np.asarray(self.value)[node]


def _best_split(x, y):
    """Best (gain, feature, threshold) by SSE reduction over midpoints of sorted unique values.

    Ties go to the lower feature index, then the lower threshold.
    """
    n = len(y)
    yc = y - y.mean()
    best = (0.0, -1, np.nan)
    total = yc.sum()
    for j in range(x.shape[1]):
        order = np.argsort(x[:, j], kind="stable")
        xs, ys = x[order, j], yc[order]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        cs = np.cumsum(ys)[:-1]
        nl = np.arange(1, n)
        nr = n - nl
        # SSE reduction = S_L^2/n_L + S_R^2/n_R - S^2/n
        gain = cs**2 / nl + (total - cs) ** 2 / nr - total**2 / n
        gain = np.where(valid, gain, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best[0]:
            best = (float(gain[i]), j, 0.5 * (xs[i] + xs[i + 1]))
    return best


def fit_tree(x, y, max_depth: int = 5, min_samples_split: int = 2) -> RegressionTree:
    x, y = _xy(x, y)
    if max_depth < 0:
        raise ModelError("max_depth must be >= 0")
    tree = RegressionTree()
    tol = 1e-12 * max(1.0, float(np.sum((y - y.mean()) ** 2)))
    stack = [(np.arange(len(y)), 0, None, None)]
    while stack:
        idx, depth, parent, side = stack.pop()
        node = tree._add(float(y[idx].mean()), depth)
        if parent is not None:
            (tree.left if side == "l" else tree.right)[parent] = node
        if depth >= max_depth or len(idx) < min_samples_split:
            continue
        gain, j, thr = _best_split(x[idx], y[idx])
        if j < 0 or gain <= tol:
            continue
        tree.feature[node] = j
        tree.threshold[node] = thr
        mask = x[idx, j] <= thr
        stack.append((idx[~mask], depth + 1, node, "r"))
        stack.append((idx[mask], depth + 1, node, "l"))
    return tree


# -- SVR with an explicit degree-2 feature map -----------------------------------------


def poly2_features(x):
    """[x_i] + [x_i * x_j for i <= j]; the constant is handled by the intercept."""
    x = _as_2d(x)
    d = x.shape[1]
    iu, ju = np.triu_indices(d)
    return np.hstack([x, x[:, iu] * x[:, ju]])


def poly2_dim(d):
    return d + d * (d + 1) // 2


@dataclass
class SVRModel:
    x_mean: np.ndarray
    x_scale: np.ndarray
    phi_mean: np.ndarray
    phi_scale: np.ndarray
    coef: np.ndarray
    intercept: float
    y_scale: float
    epsilon: float
    c: float
    history: list[float] = field(default_factory=list)

    def features(self, x):
        z = (_as_2d(x) - self.x_mean) / self.x_scale
        return (poly2_features(z) - self.phi_mean) / self.phi_scale

    def predict(self, x):
        return (self.features(x) @ self.coef + self.intercept) * self.y_scale

    def objective(self, x, y, coef=None, intercept=None) -> float:
        """Primal objective 0.5*||w||^2 + C * sum(eps-insensitive loss), in scaled units."""
        coef = self.coef if coef is None else coef
        intercept = self.intercept if intercept is None else intercept
        ys = np.asarray(y, dtype=float) / self.y_scale
        r = np.abs(ys - self.features(x) @ coef - intercept)
        c = self.c / self.y_scale
        return 0.5 * float(coef @ coef) + c * float(np.sum(np.maximum(r - self.epsilon / self.y_scale, 0)))


def fit_svr_poly2(x, y, epsilon: float = 0.1, c: float = 1.0, epochs: int = 200, batch_size: int = 128,
                  lr: float = 0.5, seed: int = 0, max_features: int = 10**6) -> SVRModel:
    """Linear epsilon-SVR on standardized degree-2 features by averaged minibatch subgradient descent.

    The target is divided by its standard deviation s; minimizing
    0.5||w||^2 + (C/s) sum max(0, |y/s - f| - eps/s) is the original problem
    rescaled by 1/s^2, so the solution is unchanged.
    """
    x, y = _xy(x, y)
    if poly2_dim(x.shape[1]) > max_features:
        raise ModelError(f"degree-2 feature map would have {poly2_dim(x.shape[1])} columns")
    if epsilon < 0 or c <= 0:
        raise ModelError("need epsilon >= 0 and c > 0")
    xm, xsd = x.mean(axis=0), x.std(axis=0)
    xsd = np.where(xsd > 0, xsd, 1.0)
    phi = poly2_features((x - xm) / xsd)
    pm, psd = phi.mean(axis=0), phi.std(axis=0)
    psd = np.where(psd > 0, psd, 1.0)
    phi = (phi - pm) / psd
    ysd = float(y.std()) or 1.0
    ys = y / ysd
    eps = epsilon / ysd
    n, p = phi.shape
    creg = c / ysd
    # per-sample objective: ||w||^2 / (2 n creg) + mean(loss)
    lam = 1.0 / (n * creg)
    w = np.zeros(p)
    b = float(np.median(ys))
    w_avg, b_avg, n_avg = np.zeros(p), 0.0, 0
    rng = np.random.default_rng(seed)
    step = 0
    model = SVRModel(xm, xsd, pm, psd, w, b, ysd, epsilon, c)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            step += 1
            r = ys[idx] - phi[idx] @ w - b
            s = np.where(r > eps, -1.0, np.where(r < -eps, 1.0, 0.0))
            gw = lam * w + phi[idx].T @ s / len(idx)
            gb = s.mean()
            eta = lr / np.sqrt(step)
            w = w - eta * gw
            b = b - eta * gb
            if epoch >= epochs // 2:
                n_avg += 1
                w_avg += (w - w_avg) / n_avg
                b_avg += (b - b_avg) / n_avg
        if epoch % 20 == 0 or epoch == epochs - 1:
            model.history.append(model.objective(x, y, w, b))
    model.coef, model.intercept = w_avg, float(b_avg)
    return model


# -- kNN ----------------------------------------------------------------------------------


@dataclass
class KNNModel:
    x: np.ndarray
    y: np.ndarray
    k: int

    def neighbors(self, query, cells: int = 1 << 22):
        q = _as_2d(query)
        if q.shape[1] != self.x.shape[1]:
            raise ModelError(f"query has {q.shape[1]} columns, training data {self.x.shape[1]}")
        out = np.empty((len(q), self.k), dtype=int)
        # direct squared differences; the expanded form reorders near-ties
        chunk = max(1, cells // self.x.size)
        for s in range(0, len(q), chunk):
            qq = q[s:s + chunk]
            d = np.sum((qq[:, None, :] - self.x[None, :, :]) ** 2, axis=2)
            # stable sort: equal distances keep the lower training index first
            out[s:s + chunk] = np.argsort(d, axis=1, kind="stable")[:, :self.k]
        return out

    def predict(self, query):
        return self.y[self.neighbors(query)].mean(axis=1)


def fit_knn(x, y, k: int = 5) -> KNNModel:
    x, y = _xy(x, y)
    if k < 1:
        raise ModelError("k must be >= 1")
    if k > len(x):
        raise ModelError(f"k={k} exceeds the {len(x)} training rows")
    return KNNModel(x.copy(), y.copy(), k)


def predict_knn(train_x, train_y, query, k: int = 5) -> np.ndarray:
    return fit_knn(train_x, train_y, k).predict(query)


# -- autoregression ------------------------------------------------------------------------


def lag_matrix(series, order):
    s = np.asarray(series, dtype=float)
    return np.column_stack([s[order - i - 1:len(s) - i - 1] for i in range(order)]), s[order:]


@dataclass
class ARModel:
    order: int
    coef: np.ndarray  # coef[i] multiplies y[t - 1 - i]
    intercept: float

    def predict(self, series):
        """One-step-ahead predictions for positions order..len(series)-1."""
        lags, _ = lag_matrix(series, self.order)
        return lags @ self.coef + self.intercept


def fit_ar(series, order: int = 7) -> ARModel:
    s = np.asarray(series, dtype=float).ravel()
    if order < 1:
        raise ModelError("order must be >= 1")
    if len(s) < order + 2:
        raise ModelError(f"series of length {len(s)} too short for AR({order})")
    if not np.all(np.isfinite(s)):
        raise ModelError("series contains non-finite values")
    lags, target = lag_matrix(s, order)
    design = np.column_stack([np.ones(len(target)), lags])
    sol, *_ = np.linalg.lstsq(design, target, rcond=None)
    return ARModel(order, sol[1:], float(sol[0]))


# -- specs ---------------------------------------------------------------------------------


@dataclass
class ModelSpec:
    kind: str
    hyperparams: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown model kind {self.kind!r}; choose from {KINDS}")
        self.hyperparams = {**DEFAULT_HYPERPARAMS[self.kind], **self.hyperparams}
        h = self.hyperparams
        checks = {
            "ridge": h.get("alpha", 1) > 0,
            "pls": h.get("n_components", 1) >= 1,
            "tree": h.get("max_depth", 1) >= 1,
            "svr": h.get("c", 1) > 0 and h.get("epsilon", 0) >= 0,
            "knn": h.get("k", 1) >= 1,
            "ar": h.get("order", 1) >= 1,
        }
        if not checks[self.kind]:
            raise ModelError(f"hyperparameters out of range for {self.kind}: {h}")

    def fit(self, x, y, seed: int = 0):
        h = self.hyperparams
        if self.kind == "ridge":
            return fit_ridge(x, y, **h)
        if self.kind == "pls":
            return fit_pls1(x, y, **h)
        if self.kind == "tree":
            return fit_tree(x, y, **h)
        if self.kind == "svr":
            return fit_svr_poly2(x, y, seed=seed, **h)
        if self.kind == "knn":
            return fit_knn(x, y, **h)
        return fit_ar(y, **h)
