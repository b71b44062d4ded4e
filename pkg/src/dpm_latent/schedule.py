"""Discrete noise schedules.

Steps are 1-based: ``t = 1..T``.  ``alpha_bar(0)`` is fixed to 1 so the last
reverse step lands on clean data.  A schedule may be a *respaced* view of a
longer one (coarse ladders for gradient-time sampling); ``timesteps`` then
records which original step each entry came from.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ScheduleError


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    betas: np.ndarray
    timesteps: np.ndarray = None
    beta_start: float = None
    beta_end: float = None
    alphas: np.ndarray = field(init=False, repr=False)
    alpha_bars: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        betas = np.array(self.betas, dtype=np.float64).reshape(-1)
        if betas.size < 1:
            raise ScheduleError("schedule: need at least one step")
        if not np.all(np.isfinite(betas)) or np.any(betas <= 0) or np.any(betas >= 1):
            bad = int(np.flatnonzero(~((betas > 0) & (betas < 1)))[0]) + 1
            raise ScheduleError(f"schedule: beta[{bad}]={betas[bad - 1]!r} outside (0, 1)")
        alphas = 1.0 - betas
        alpha_bars = np.cumprod(alphas)
        ts = np.arange(1, betas.size + 1) if self.timesteps is None else np.asarray(self.timesteps)
        if ts.shape != betas.shape:
            raise ScheduleError("schedule: timesteps must align with betas")
        for name, arr in (("betas", betas), ("alphas", alphas), ("alpha_bars", alpha_bars)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        ts = ts.astype(np.int64)
        ts.setflags(write=False)
        object.__setattr__(self, "timesteps", ts)

    @property
    def T(self):
        return int(self.betas.size)

    def _check(self, t):
        if not 1 <= t <= self.T:
            raise ScheduleError(f"schedule: step {t} outside 1..{self.T}")

    def alpha_bar(self, t):
        """Cumulative product at step ``t``; ``alpha_bar(0) == 1``."""
        if t == 0:
            return 1.0
        self._check(t)
        return float(self.alpha_bars[t - 1])

    def beta(self, t):
        self._check(t)
        return float(self.betas[t - 1])

    def alpha(self, t):
        self._check(t)
        return float(self.alphas[t - 1])

    def respace(self, n_steps):
        """Coarse ladder of ``n_steps`` evenly spaced steps that always keeps step T.

        The returned schedule looks up the original cumulative products and
        re-derives per-step betas from their ratios.
        """
        n_steps = int(n_steps)
        if not 1 <= n_steps <= self.T:
            raise ScheduleError(f"schedule: cannot respace {self.T} steps to {n_steps}")
        if n_steps == self.T:
            return self
        idx = np.round(np.arange(1, n_steps + 1) * self.T / n_steps).astype(np.int64)
        abar = self.alpha_bars[idx - 1]
        prev = np.concatenate([[1.0], abar[:-1]])
        return NoiseSchedule(1.0 - abar / prev, timesteps=self.timesteps[idx - 1])

    def same_as(self, other):
        return (
            self is other
            or (
                np.array_equal(self.betas, other.betas)
                and np.array_equal(self.timesteps, other.timesteps)
            )
        )

    def to_config(self):
        if self.beta_start is None:
            return {"T": self.T, "betas": [float(b) for b in self.betas]}
        return {"T": self.T, "beta_start": self.beta_start, "beta_end": self.beta_end}

    @classmethod
    def from_config(cls, cfg):
        if "betas" in cfg:
            return cls(np.asarray(cfg["betas"], dtype=np.float64))
        try:
            return linear_schedule(cfg.get("beta_start", 1e-4), cfg.get("beta_end", 0.02), cfg["T"])
        except KeyError as exc:
            raise ScheduleError(f"schedule: missing key {exc}") from None


def linear_schedule(beta_start, beta_end, T):
    """Betas linearly spaced from ``beta_start`` to ``beta_end`` inclusive."""
    if int(T) != T or T < 1:
        raise ScheduleError(f"schedule: T must be a positive integer, got {T!r}")
    if not 0 < beta_start <= beta_end < 1:
        raise ScheduleError(
            f"schedule: need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )
    betas = np.linspace(beta_start, beta_end, int(T), dtype=np.float64)
    return NoiseSchedule(betas, beta_start=float(beta_start), beta_end=float(beta_end))


def ddim_sigma(s, t, eta):
    """DDIM reverse-step standard deviation for stochasticity ``eta``."""
    if eta < 0:
        raise ConfigError(f"eta must be >= 0, got {eta}")
    s._check(t)
    a_t = s.alpha_bar(t)
    a_prev = s.alpha_bar(t - 1)
    return float(eta * np.sqrt((1.0 - a_prev) / (1.0 - a_t)) * np.sqrt(1.0 - a_t / a_prev))


def forward_marginal(s, x0, t, noise):
    """Reparameterized draw from q(x_t | x_0): sqrt(abar_t) x0 + sqrt(1 - abar_t) noise."""
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != x0.shape:
        raise ConfigError(f"noise shape {noise.shape} != x0 shape {x0.shape}")
    a = s.alpha_bar(t)
    return np.sqrt(a) * x0 + np.sqrt(1.0 - a) * noise
