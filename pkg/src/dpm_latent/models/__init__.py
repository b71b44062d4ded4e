from .denoiser import TinyDenoiser, TrainConfig, denoiser_loss, denoiser_train, denoiser_vjp
from .estimators import (
    EpsilonMeanEstimator,
    MeanEstimator,
    ScoreMeanEstimator,
    gm_mean_estimator,
    score_to_mean,
    vp_drift,
)
from .mixture import GaussianMixture, MixtureEpsilon, gm_posterior_x0_mean

__all__ = [
    "EpsilonMeanEstimator",
    "GaussianMixture",
    "MeanEstimator",
    "MixtureEpsilon",
    "ScoreMeanEstimator",
    "TinyDenoiser",
    "TrainConfig",
    "denoiser_loss",
    "denoiser_train",
    "denoiser_vjp",
    "gm_mean_estimator",
    "gm_posterior_x0_mean",
    "score_to_mean",
    "vp_drift",
]
