"""Reverse-step mean estimators mu(x_t, t | cond) and their step deviations sigma_t.

Every estimator exposes ``mean``, ``sigma`` and ``mean_vjp``; samplers,
encoders and guidance only talk to that surface.  Inputs may carry leading
batch dimensions, the last axis is the data dimension.
"""

import numpy as np

from ..errors import ConfigError
from ..schedule import ddim_sigma
from .mixture import MixtureEpsilon

KINDS = ("ddpm-opt1", "ddpm-opt2", "ddim")


class MeanEstimator:
    """Base class.  Subclasses set ``schedule`` and ``posterior`` (encoder family)."""

    schedule = None
    posterior = ("ddpm", 0.0)
    conditions = ()

    @property
    def T(self):
        return self.schedule.T

    def mean(self, x, t, cond=None):
        raise NotImplementedError

    def sigma(self, t):
        raise NotImplementedError

    def mean_vjp(self, x, t, cond, cotangent):
        raise NotImplementedError

    def respaced(self, n_steps):
        raise NotImplementedError(f"{type(self).__name__} has no coarse-step form")


class EpsilonMeanEstimator(MeanEstimator):
    """DDPM or DDIM mean built from a noise predictor.

    ``eps_model`` provides ``eps(x, s, t, cond)`` and ``eps_vjp(x, s, t, cond, cot)``.
    Both reverse formulas are affine in (x, eps_hat), mu = a_t x + b_t eps_hat,
    which is all the VJP needs.
    """

    def __init__(self, eps_model, schedule, kind="ddpm-opt2", eta=0.0):
        if kind not in KINDS:
            raise ConfigError(f"unsupported estimator kind {kind!r}; expected one of {KINDS}")
        if eta < 0:
            raise ConfigError(f"eta must be >= 0, got {eta}")
        self.eps_model = eps_model
        self.schedule = schedule
        self.kind = kind
        self.eta = float(eta)
        self.conditions = tuple(getattr(eps_model, "conditions", ()))
        if kind == "ddim":
            self.posterior = ("ddim", self.eta)
        else:
            self.posterior = ("ddpm", 0.0)
        self._coefs = [self._step_coefs(t) for t in range(1, schedule.T + 1)]

    def __repr__(self):
        eta = f", eta={self.eta}" if self.kind == "ddim" else ""
        return f"EpsilonMeanEstimator({self.kind}{eta}, T={self.T})"

    def _step_coefs(self, t):
        s = self.schedule
        a_t, a_prev = s.alpha_bar(t), s.alpha_bar(t - 1)
        if self.kind == "ddim":
            sig = ddim_sigma(s, t, self.eta)
        elif self.kind == "ddpm-opt1":
            sig = np.sqrt(s.beta(t))
        else:
            sig = np.sqrt((1.0 - a_prev) * s.beta(t) / (1.0 - a_t))
        # abar_0 = 1 zeroes the option-2 / DDIM deviation at t = 1; stochastic
        # families fall back to sqrt(beta_1) so every step stays encodable.
        stochastic = self.kind != "ddim" or self.eta > 0
        if stochastic and sig == 0.0:
            sig = np.sqrt(s.beta(t))
        if self.kind == "ddim":
            a = np.sqrt(a_prev / a_t)
            direction = np.sqrt(max(1.0 - a_prev - sig**2, 0.0))
            b = direction - np.sqrt(a_prev) * np.sqrt(1.0 - a_t) / np.sqrt(a_t)
        else:
            a = 1.0 / np.sqrt(s.alpha(t))
            b = -s.beta(t) / (np.sqrt(1.0 - a_t) * np.sqrt(s.alpha(t)))
        return float(a), float(b), float(sig)

    def coefficients(self, t):
        """``(a_t, b_t, sigma_t)`` with mu = a_t x + b_t eps_hat."""
        return self._coefs[t - 1]

    def eps(self, x, t, cond=None):
        return self.eps_model.eps(np.asarray(x, dtype=np.float64), self.schedule, t, cond)

    def x0(self, x, t, cond=None):
        a = self.schedule.alpha_bar(t)
        return (x - np.sqrt(1.0 - a) * self.eps(x, t, cond)) / np.sqrt(a)

    def mean(self, x, t, cond=None):
        a, b, _ = self.coefficients(t)
        x = np.asarray(x, dtype=np.float64)
        return a * x + b * self.eps(x, t, cond)

    def sigma(self, t):
        return self.coefficients(t)[2]

    def mean_vjp(self, x, t, cond, cotangent):
        a, b, _ = self.coefficients(t)
        cot = np.asarray(cotangent, dtype=np.float64)
        return a * cot + self.eps_model.eps_vjp(np.asarray(x, dtype=np.float64), self.schedule, t, cond, b * cot)

    def respaced(self, n_steps):
        coarse = self.schedule.respace(n_steps)
        if coarse is self.schedule:
            return self
        return EpsilonMeanEstimator(self.eps_model, coarse, self.kind, self.eta)

    def with_schedule(self, schedule):
        return EpsilonMeanEstimator(self.eps_model, schedule, self.kind, self.eta)


def gm_mean_estimator(gm, s, kind="ddpm-opt2", eta=0.0):
    """Mean estimator driven by the exact mixture denoiser.

    ``kind`` is ``"ddpm-opt1"``, ``"ddpm-opt2"`` (posterior variance, the
    default) or ``"ddim"`` with stochasticity ``eta``.
    """
    est = EpsilonMeanEstimator(MixtureEpsilon(gm), s, kind, eta)
    est.conditions = gm.condition_set
    return est


class ScoreMeanEstimator(MeanEstimator):
    """Reverse-diffusion predictor: mu = x - f_t(x) + sigma_t^2 * score(x, t)."""

    def __init__(self, score_fn, drift_fn, schedule, sigmas=None, score_vjp=None, drift_vjp=None):
        self.score_fn = score_fn
        self.drift_fn = drift_fn
        self.schedule = schedule
        if sigmas is None:
            sigmas = np.sqrt(schedule.betas)
        self.sigmas = np.asarray(sigmas, dtype=np.float64)
        if self.sigmas.shape[0] != schedule.T:
            raise ConfigError("score estimator: one sigma per step required")
        self.score_vjp = score_vjp
        self.drift_vjp = drift_vjp
        self.posterior = ("ddpm", 0.0)

    def mean(self, x, t, cond=None):
        x = np.asarray(x, dtype=np.float64)
        sig = self.sigmas[t - 1]
        return x - self.drift_fn(x, t) + sig**2 * self.score_fn(x, t)

    def sigma(self, t):
        sig = self.sigmas[t - 1]
        return float(sig) if np.ndim(sig) == 0 else sig

    def mean_vjp(self, x, t, cond, cotangent):
        if self.score_vjp is None or self.drift_vjp is None:
            raise NotImplementedError("score estimator built without score_vjp/drift_vjp")
        cot = np.asarray(cotangent, dtype=np.float64)
        sig = self.sigmas[t - 1]
        return cot - self.drift_vjp(x, t, cot) + self.score_vjp(x, t, sig**2 * cot)


def score_to_mean(score_fn, drift_fn, s, sigmas=None, score_vjp=None, drift_vjp=None):
    """Wrap a score model and per-step forward drift as a mean estimator.

    ``sigmas`` defaults to sqrt(beta_t), the variance-preserving discretization.
    """
    return ScoreMeanEstimator(score_fn, drift_fn, s, sigmas, score_vjp, drift_vjp)


def vp_drift(s):
    """Drift f_t(x) = (sqrt(1 - beta_t) - 1) x of the discretized variance-preserving SDE.

    Returns ``(drift_fn, drift_vjp)``.
    """
    k = np.sqrt(1.0 - s.betas) - 1.0

    def drift(x, t):
        return k[t - 1] * np.asarray(x, dtype=np.float64)

    def drift_vjp(x, t, cot):
        return k[t - 1] * np.asarray(cot, dtype=np.float64)

    return drift, drift_vjp
