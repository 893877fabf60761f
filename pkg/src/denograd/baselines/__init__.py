"""Comparison denoisers. Each maps a DataMatrix to a DataMatrix of the same shape."""

from .emd import EMDParams, EMDWarning, emd, emd_denoise
from .neural import DAEConfig, DenoisingAutoencoder, DNResNet, DNResNetConfig, dae_denoise, dnresnet_denoise
from .pca import pca_denoise
from .smoothing import KalmanParams, kalman_denoise, moving_average
from .wavelet import WaveletParams, wavelet_denoise

__all__ = [
    "DAEConfig",
    "DNResNet",
    "DNResNetConfig",
    "DenoisingAutoencoder",
    "EMDParams",
    "EMDWarning",
    "KalmanParams",
    "WaveletParams",
    "dae_denoise",
    "dnresnet_denoise",
    "emd",
    "emd_denoise",
    "kalman_denoise",
    "moving_average",
    "pca_denoise",
    "wavelet_denoise",
]
