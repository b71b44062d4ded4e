"""DPM-Encoder: map data to a latent code that the stochastic sampler replays exactly.

Noisy states are drawn from the fixed posterior q(x_{1:T} | x_0) and each
step's noise is recovered as ``eps_t = (x_{t-1} - mu(x_t, t)) / sigma_t``.
Feeding the resulting code back through :func:`dpm_latent.sampler.generate`
reproduces ``x_0`` up to floating-point accumulation.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError, ZeroSigmaError
from .sampler import LatentCode
from .schedule import ddim_sigma

SIGMA_FLOOR = 1e-12


@dataclass(eq=False)
class Trajectory:
    """States x_0..x_T in step order (``x[0]`` is the input)."""

    x: list

    @property
    def T(self):
        return len(self.x) - 1

    def to_csv(self, path):
        """One row per (step, batch element): step, [index,] coordinates."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for t, xt in enumerate(self.x):
                xt = np.asarray(xt)
                if xt.ndim == 1:
                    w.writerow([t] + [repr(float(v)) for v in xt])
                else:
                    for i, row in enumerate(xt.reshape(-1, xt.shape[-1])):
                        w.writerow([t, i] + [repr(float(v)) for v in row])


def _family(family):
    if isinstance(family, str):
        family = (family, 0.0)
    name, eta = family[0], float(family[1]) if len(family) > 1 else 0.0
    if name not in ("ddpm", "ddim"):
        raise ConfigError(f"unknown posterior family {name!r}")
    return name, eta


def posterior_sample(s, x0, family, rng, t_stop=None):
    """Draw x_1..x_{t_stop} from q(x_{1:T} | x_0) (``t_stop`` defaults to T).

    ``family`` is ``"ddpm"`` (forward Markov chain) or ``("ddim", eta)``
    (marginal at ``t_stop`` then backward conditionals q(x_{t-1} | x_t, x_0)).
    """
    name, eta = _family(family)
    x0 = np.asarray(x0, dtype=np.float64)
    if not np.all(np.isfinite(x0)):
        raise NumericalError("posterior_sample: non-finite input", module="encoder")
    T = s.T if t_stop is None else int(t_stop)
    if not 0 <= T <= s.T:
        raise ConfigError(f"posterior_sample: t_stop={t_stop} outside 0..{s.T}")
    xs = [x0]
    if T == 0:
        return Trajectory(xs)
    if name == "ddpm":
        x = x0
        for t in range(1, T + 1):
            x = np.sqrt(s.alpha(t)) * x + np.sqrt(s.beta(t)) * rng.standard_normal(x0.shape)
            xs.append(x)
        return Trajectory(xs)
    a_T = s.alpha_bar(T)
    x = np.sqrt(a_T) * x0 + np.sqrt(1.0 - a_T) * rng.standard_normal(x0.shape)
    backward = [x]
    for t in range(T, 1, -1):
        a_t, a_prev = s.alpha_bar(t), s.alpha_bar(t - 1)
        sig = ddim_sigma(s, t, eta)
        direction = (x - np.sqrt(a_t) * x0) / np.sqrt(1.0 - a_t)
        x = (
            np.sqrt(a_prev) * x0
            + np.sqrt(max(1.0 - a_prev - sig**2, 0.0)) * direction
            + sig * rng.standard_normal(x0.shape)
        )
        backward.append(x)
    return Trajectory(xs + backward[::-1])


def residuals(m, traj, cond=None):
    """Noise blocks eps_t = (x_{t-1} - mu(x_t, t)) / sigma_t for t = T..1 (first axis)."""
    T = traj.T
    out = []
    for t in range(T, 0, -1):
        sig = m.sigma(t)
        if np.any(np.asarray(sig) < SIGMA_FLOOR):
            raise ZeroSigmaError(
                f"encoder: sigma_{t} = {np.min(sig):.3g}; residuals are undefined for "
                "deterministic steps, use a stochastic family (eta > 0 or DDPM)"
            )
        out.append((traj.x[t - 1] - m.mean(traj.x[t], t, cond)) / sig)
    if not out:
        return np.empty((0,) + np.shape(traj.x[0]))
    return np.stack(out)


def dpm_encode(m, x0, rng, cond=None, family=None, return_trajectory=False):
    """Sample z ~ DPMEnc(z | x0, G) for the stochastic sampler of estimator ``m``.

    ``family`` selects the posterior; it defaults to the estimator's own
    (DDPM chain for DDPM estimators, DDIM(eta) for DDIM estimators).
    """
    family = m.posterior if family is None else family
    traj = posterior_sample(m.schedule, x0, family, rng)
    z = LatentCode(traj.x[-1], residuals(m, traj, cond))
    if return_trajectory:
        return z, traj
    return z
