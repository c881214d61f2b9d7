"""Microphone localization from environmental sound landmarks.

Pipeline: supervised Itakura-Saito NMF separates a mixture into known
landmark sources, per-source log-RMS features feed Gaussian-process spatial
models, and a grid search over the room maximizes the resulting likelihood
(optionally fused with a Gaussian prior from another positioning system).
"""

from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .dsp import AudioClip, FeatureVector, Spectrogram, mfcc, mix_at_snr, stft, window_clip
from .evaluate import EvalReport, circular_error, loocv, saturation_snr, snr_sweep, summarize
from .gp import GpModel, KernelParams, fit, kernel, log_density, predict
from .localize import (
    GaussianPrior,
    LikelihoodMap,
    RoomGrid,
    argmax_ml,
    fit_direct_regression,
    imu_like_prior,
    likelihood_map,
    posterior_map,
    predict_location,
)
from .model_io import LocalizerModel, load_model, save_model, train_localizer
from .nmf import (
    BasisMatrix,
    Decomposition,
    NmfConfig,
    NmfModel,
    decompose,
    extract_activation_features,
    extract_features,
    train_basis,
    wiener_extract,
)
from .sim import SceneConfig, SceneSource, SourceSignature, build_dataset, default_scene

__version__ = "0.1.0"
