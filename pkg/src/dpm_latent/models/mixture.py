"""Diagonal Gaussian mixtures and their exact denoising posterior."""

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..errors import ConfigError, NumericalError


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Mixture of diagonal Gaussians, optionally with one condition label per component.

    Conditioning on label ``c`` keeps only the components tagged ``c`` and
    renormalizes their weights.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    labels: np.ndarray = None

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        m = np.asarray(self.means, dtype=np.float64)
        if m.ndim == 1:
            m = m.reshape(w.size, -1)
        v = np.asarray(self.variances, dtype=np.float64)
        v = np.broadcast_to(v.reshape(w.size, -1) if v.ndim <= 1 else v, m.shape).copy()
        if m.shape[0] != w.size:
            raise ConfigError("mixture: one mean per weight required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError(f"mixture: weights must be nonnegative and sum to 1, got {w}")
        if not np.all(v > 0):
            raise ConfigError("mixture: variances must be positive")
        labels = None
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if labels.size != w.size:
                raise ConfigError("mixture: one label per component required")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def condition_set(self):
        return () if self.labels is None else tuple(sorted(set(self.labels.tolist())))

    def select(self, cond=None):
        if cond is None:
            return self
        if self.labels is None or cond not in self.condition_set:
            raise ConfigError(f"mixture: unknown condition label {cond!r}")
        keep = self.labels == cond
        w = self.weights[keep]
        return GaussianMixture(w / w.sum(), self.means[keep], self.variances[keep])

    def mean(self):
        return self.weights @ self.means

    def sample(self, n, rng):
        k = rng.choice(self.weights.size, size=n, p=self.weights)
        noise = rng.standard_normal((n, self.dim))
        return self.means[k] + np.sqrt(self.variances[k]) * noise

    def _posterior_terms(self, x, alpha_bar):
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise NumericalError("mixture: non-finite x_t", module="models")
        sa = np.sqrt(alpha_bar)
        s = alpha_bar * self.variances + (1.0 - alpha_bar)  # (K, d)
        c = sa * self.means
        diff = x[..., None, :] - c  # (..., K, d)
        logn = -0.5 * np.sum(diff**2 / s + np.log(2 * np.pi * s), axis=-1)
        logits = np.log(np.where(self.weights > 0, self.weights, 1e-300)) + logn
        r = np.exp(logits - logsumexp(logits, axis=-1, keepdims=True))
        gain = sa * self.variances / s
        post = self.means + gain * diff
        return r, gain, post, -diff / s

    def posterior_mean(self, x, alpha_bar):
        """E[x_0 | x_t] for x_t = sqrt(abar) x_0 + sqrt(1 - abar) noise."""
        if alpha_bar >= 1.0:
            return np.array(x, dtype=np.float64)
        r, _, post, _ = self._posterior_terms(x, alpha_bar)
        return np.einsum("...k,...kd->...d", r, post)

    def posterior_mean_vjp(self, x, alpha_bar, cotangent):
        """Transpose-Jacobian of :meth:`posterior_mean` applied to ``cotangent``."""
        cot = np.asarray(cotangent, dtype=np.float64)
        if alpha_bar >= 1.0:
            return cot.copy()
        r, gain, post, h = self._posterior_terms(x, alpha_bar)
        direct = np.einsum("...k,kd->...d", r, gain) * cot
        a = np.einsum("...kd,...d->...k", post, cot)
        hbar = np.einsum("...k,...kd->...d", r, h)
        spread = np.einsum("...k,...kd->...d", r * a, h) - np.sum(r * a, axis=-1)[..., None] * hbar
        return direct + spread

    def to_dict(self):
        d = {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }
        if self.labels is not None:
            d["labels"] = self.labels.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["weights"], d["means"], d["variances"], d.get("labels"))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def gm_posterior_x0_mean(gm, s, x_t, t, cond=None):
    """Exact Bayes denoiser E[x_0 | x_t] at step ``t`` under mixture prior ``gm``."""
    return gm.select(cond).posterior_mean(x_t, s.alpha_bar(t))


class MixtureEpsilon:
    """Exact noise prediction for mixture data, eps = (x - sqrt(abar) x0_hat) / sqrt(1 - abar)."""

    def __init__(self, gm):
        self.gm = gm
        self.dim = gm.dim
        self._cache = {}

    def _component(self, cond):
        if cond not in self._cache:
            self._cache[cond] = self.gm.select(cond)
        return self._cache[cond]

    def x0(self, x, s, t, cond=None):
        return self._component(cond).posterior_mean(x, s.alpha_bar(t))

    def eps(self, x, s, t, cond=None):
        a = s.alpha_bar(t)
        return (x - np.sqrt(a) * self.x0(x, s, t, cond)) / np.sqrt(1.0 - a)

    def eps_vjp(self, x, s, t, cond, cotangent):
        a = s.alpha_bar(t)
        pulled = self._component(cond).posterior_mean_vjp(x, a, cotangent)
        return (cotangent - np.sqrt(a) * pulled) / np.sqrt(1.0 - a)
