"""Instance denoising driven by the input gradients of a trained regressor."""

from .backbone import BackboneConfig, BackboneModel, train_backbone
from .data import DataMatrix, Dataset, NoiseSpec
from .denoise import DenoGrad, DenoGradConfig, DenoiseReport, denoise_tabular, denoise_timeseries

__version__ = "0.1.0"

__all__ = [
    "BackboneConfig",
    "BackboneModel",
    "DataMatrix",
    "DenoGrad",
    "DenoGradConfig",
    "DenoiseReport",
    "Dataset",
    "NoiseSpec",
    "denoise_tabular",
    "denoise_timeseries",
    "train_backbone",
]
