"""Learned denoisers trained on the noisy data alone.

Both use :mod:`denograd.backbone` for the network and the Table-style early
stopping (patience on a held-out fraction). Data are z-scored internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..backbone import BackboneConfig, BackboneModel, train_backbone
from ..data import DataError, DataMatrix, Standardizer


@dataclass
class DAEConfig:
    latent_dim: int = 8
    encoder: list[int] = field(default_factory=lambda: [256, 128, 64, 32])
    training: BackboneConfig = field(default_factory=BackboneConfig)

    def network(self) -> BackboneConfig:
        hidden = [*self.encoder, self.latent_dim, *reversed(self.encoder)]
        t = self.training
        return BackboneConfig(hidden, t.activation, t.learning_rate, t.batch_size, t.max_epochs,
                              t.patience, t.validation_fraction, t.seed,
                              linear_hidden=[len(self.encoder)])


@dataclass
class DNResNetConfig:
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    training: BackboneConfig = field(default_factory=BackboneConfig)

    def network(self) -> BackboneConfig:
        t = self.training
        return BackboneConfig(list(self.hidden), t.activation, t.learning_rate, t.batch_size,
                              t.max_epochs, t.patience, t.validation_fraction, t.seed)


class _NeuralDenoiser:
    config: DAEConfig | DNResNetConfig

    def __init__(self, config=None):
        self.config = config or self.default_config()
        self.scaler: Standardizer | None = None
        self.model: BackboneModel | None = None

    def _check(self, data: DataMatrix):
        if not np.all(np.isfinite(data.values)):
            raise DataError("input contains non-finite values")

    def fit(self, data: DataMatrix):
        self._check(data)
        bs = self.config.training.batch_size
        if len(data) < 2 * bs:
            raise DataError(f"need at least {2 * bs} rows, got {len(data)}")
        self.scaler = Standardizer.fit(data)
        z = self.scaler.transform(data).values
        self.model = train_backbone(z, self.training_target(z), self.config.network())
        return self

    def transform(self, data: DataMatrix) -> DataMatrix:
        if self.model is None:
            raise RuntimeError("denoiser is not fitted")
        self._check(data)
        z = self.scaler.transform(data)
        return self.scaler.inverse(z.with_values(self.output(z.values)))


class DenoisingAutoencoder(_NeuralDenoiser):
    """Bottlenecked MLP reconstructing its input; the output is the reconstruction."""

    default_config = DAEConfig

    def training_target(self, z):
        return z

    def output(self, z):
        return self.model.predict(z)


class DNResNet(_NeuralDenoiser):
    """Residual denoiser: the network estimates the noise, which is subtracted.

    Without clean references the reconstruction loss ||x - (x - n(x))||**2
    reduces to ||n(x)||**2, so the network is trained towards a zero output.
    """

    default_config = DNResNetConfig

    def training_target(self, z):
        return np.zeros_like(z)

    def estimated_noise(self, data: DataMatrix) -> np.ndarray:
        z = self.scaler.transform(data).values
        return self.model.predict(z) * self.scaler.scale

    def output(self, z):
        return z - self.model.predict(z)


def dae_denoise(data: DataMatrix, config: DAEConfig | None = None) -> DataMatrix:
    return DenoisingAutoencoder(config).fit(data).transform(data)


def dnresnet_denoise(data: DataMatrix, config: DNResNetConfig | None = None) -> DataMatrix:
    return DNResNet(config).fit(data).transform(data)
