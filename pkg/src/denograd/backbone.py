"""Feed-forward regression network with input gradients.

A plain numpy MLP (ReLU hidden layers, linear output) trained with Adam on
mean squared error. Besides the usual weight gradients it can backpropagate
the per-row loss to its *inputs*, which is what the denoiser consumes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class BackboneConfig:
    hidden_layer_sizes: list[int] = field(default_factory=lambda: [256, 128, 64])
    activation: str = "relu"
    learning_rate: float = 0.001
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 15
    validation_fraction: float = 0.2
    seed: int = 0
    # hidden layer indices that skip the activation (e.g. an autoencoder bottleneck)
    linear_hidden: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.hidden_layer_sizes = [int(h) for h in self.hidden_layer_sizes]
        self.linear_hidden = sorted(int(i) for i in self.linear_hidden)
        if any(not 0 <= i < len(self.hidden_layer_sizes) for i in self.linear_hidden):
            raise ValueError("linear_hidden indices must address hidden layers")
        if any(h < 1 for h in self.hidden_layer_sizes):
            raise ValueError("hidden layer sizes must be >= 1")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")


@dataclass
class GradientPair:
    grad_x: np.ndarray
    grad_y: np.ndarray


class BackboneModel:
    """MLP regressor. ``weights[i]`` has shape (fan_in, fan_out)."""

    def __init__(self, input_dim: int, output_dim: int, config: BackboneConfig | None = None):
        self.config = config or BackboneConfig()
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim)
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be positive")
        self.trained = False
        self.train_loss_history: list[float] = []
        self.val_loss_history: list[float] = []
        self.best_epoch: int | None = None
        sizes = self.layer_sizes
        rng = np.random.default_rng(self.config.seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim, *self.config.hidden_layer_sizes, self.output_dim]

    # -- forward / backward -------------------------------------------------

    def _is_linear(self, i):
        return i == len(self.weights) - 1 or i in self.config.linear_hidden

    def _act(self, i, z):
        return z if self._is_linear(i) else np.maximum(z, 0.0)

    def _forward(self, x):
        """Return the pre-activations of every layer; the last one is the output."""
        pre = []
        a = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            pre.append(z)
            a = self._act(i, z)
        return pre

    def _backward(self, x, pre, dout, want_params=True):
        """Backpropagate ``dout`` (dL/d output). Returns (dL/dx, [dW], [db])."""
        dws, dbs = [], []
        delta = dout
        for i in range(len(self.weights) - 1, -1, -1):
            a_prev = self._act(i - 1, pre[i - 1]) if i > 0 else x
            if want_params:
                dws.append(a_prev.T @ delta)
                dbs.append(delta.sum(axis=0))
            delta = delta @ self.weights[i].T
            if i > 0 and not self._is_linear(i - 1):
                delta = delta * (pre[i - 1] > 0)
        dws.reverse()
        dbs.reverse()
        return delta, dws, dbs

    def _check_x(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(f"expected input with {self.input_dim} columns, got shape {x.shape}")
        return x

    def predict(self, x) -> np.ndarray:
        x = self._check_x(x)
        return self._forward(x)[-1]

    def input_gradients(self, x, y) -> GradientPair:
        """Gradients of the per-row loss mean((f(x) - y)**2) w.r.t. x and y.

        Each row is treated as its own sample, so row ``i`` of the result only
        depends on row ``i`` of the inputs.
        """
        if not self.trained:
            raise RuntimeError("model is not trained")
        x = self._check_x(x)
        y = np.asarray(y, dtype=float).reshape(x.shape[0], -1)
        if y.shape[1] != self.output_dim:
            raise ValueError(f"expected targets with {self.output_dim} columns, got {y.shape[1]}")
        pre = self._forward(x)
        resid = pre[-1] - y
        dout = 2.0 * resid / self.output_dim
        gx, _, _ = self._backward(x, pre, dout, want_params=False)
        return GradientPair(grad_x=gx, grad_y=-dout)

    def loss(self, x, y) -> float:
        diff = self.predict(x) - np.asarray(y, dtype=float).reshape(-1, self.output_dim)
        return float(np.mean(diff**2))

    def checksum(self) -> float:
        return float(sum(np.sum(w) for w in self.weights) + sum(np.sum(b) for b in self.biases))

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "trained": self.trained,
            "train_loss_history": self.train_loss_history,
            "val_loss_history": self.val_loss_history,
            "layers": [
                {"shape": list(w.shape), "weights": w.ravel().tolist(), "bias": b.tolist()}
                for w, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BackboneModel":
        model = cls(doc["input_dim"], doc["output_dim"], BackboneConfig(**doc["config"]))
        if len(doc["layers"]) != len(model.weights):
            raise ValueError("layer count does not match the config")
        for i, layer in enumerate(doc["layers"]):
            shape = tuple(layer["shape"])
            if shape != model.weights[i].shape:
                raise ValueError(f"layer {i}: shape {shape} != expected {model.weights[i].shape}")
            model.weights[i] = np.asarray(layer["weights"], dtype=float).reshape(shape)
            model.biases[i] = np.asarray(layer["bias"], dtype=float)
        model.trained = bool(doc["trained"])
        model.train_loss_history = list(doc.get("train_loss_history", []))
        model.val_loss_history = list(doc.get("val_loss_history", []))
        return model

    def save(self, path):
        # json writes floats with repr(), which round-trips float64 exactly
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "BackboneModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train_backbone(x, y, config: BackboneConfig | None = None, chronological: bool = False) -> BackboneModel:
    """Fit an MLP to (x, y) by minibatch Adam with early stopping.

    The last ``validation_fraction`` of the rows is held out when
    ``chronological`` is set, otherwise a seeded random subset. Weights are
    restored to the epoch with the lowest validation loss.
    """
    config = config or BackboneConfig()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y.reshape(-1, 1)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"x and y row counts differ: {x.shape} vs {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("training data contains non-finite values")
    n = x.shape[0]
    if n < 2 * config.batch_size:
        raise ValueError(f"need at least {2 * config.batch_size} rows, got {n}")

    rng = np.random.default_rng(config.seed)
    n_val = max(1, int(round(n * config.validation_fraction)))
    if chronological:
        train_idx, val_idx = np.arange(n - n_val), np.arange(n - n_val, n)
    else:
        perm = rng.permutation(n)
        train_idx, val_idx = np.sort(perm[n_val:]), np.sort(perm[:n_val])
    xt, yt = x[train_idx], y[train_idx]
    xv, yv = x[val_idx], y[val_idx]

    model = BackboneModel(x.shape[1], y.shape[1], config)
    params = [*model.weights, *model.biases]
    opt = _Adam(params, config.learning_rate)
    n_layers = len(model.weights)

    best_val = np.inf
    best_state = None
    since_best = 0
    bs = config.batch_size
    for epoch in range(config.max_epochs):
        order = rng.permutation(len(xt))
        total = 0.0
        for start in range(0, len(xt), bs):
            idx = order[start:start + bs]
            xb, yb = xt[idx], yt[idx]
            pre = model._forward(xb)
            resid = pre[-1] - yb
            total += float(np.sum(resid**2))
            dout = 2.0 * resid / resid.size
            _, dws, dbs = model._backward(xb, pre, dout)
            opt.step([*dws, *dbs])
        train_loss = total / yt.size
        val_loss = float(np.mean((model._forward(xv)[-1] - yv) ** 2))
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingDivergedError(f"loss became non-finite at epoch {epoch}")
        model.train_loss_history.append(train_loss)
        model.val_loss_history.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_state = [p.copy() for p in params]
            model.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    for i in range(n_layers):
        model.weights[i] = best_state[i]
        model.biases[i] = best_state[n_layers + i]
    model.trained = True
    return model


def train_on_matrix(data, target_cols, config: BackboneConfig | None = None, chronological: bool = False):
    """Train on a DataMatrix, regressing ``target_cols`` on the remaining columns."""
    targets = [target_cols] if isinstance(target_cols, str) else list(target_cols)
    features = [c for c in data.columns if c not in targets]
    if not features:
        raise ValueError("no feature columns left after removing the targets")
    return train_backbone(data.select(features).values, data.select(targets).values, config, chronological)
