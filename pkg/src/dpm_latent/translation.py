"""Translation between two models (or two condition labels) through a shared latent code.

* :func:`cycle_translate` encodes under the source and replays the same noise
  under the target, optionally truncated at an encoding step ``T_es``.
* :func:`sdedit_refine` noises to ``T_sd`` and denoises.
* :func:`ddib_translate` inverts the deterministic path under the source and
  decodes under the target.
* :func:`estimate_lipschitz`, :func:`estimate_condition_gap` and
  :func:`propagate_bound` give the per-step distance bound
  ``B_{t-1} = (K_t + 1) B_t + S_t`` with ``B_{T_es} = 0``.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .encoder import posterior_sample, residuals
from .errors import ConfigError, NonConvergenceError, ScheduleMismatchError
from .rng import as_rng
from .sampler import generate_deterministic
from .schedule import forward_marginal

BOUND_SLACK = 1e-9


def _norm(v):
    return np.linalg.norm(np.asarray(v), axis=-1)


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)


@dataclass(eq=False)
class TranslationResult:
    source: np.ndarray
    output: np.ndarray
    T_es: int
    distances: np.ndarray  # ||x_t - xhat_t|| for t = T_es..0 (first axis)
    seed: int = None

    def to_dict(self):
        return {
            "source": np.asarray(self.source).tolist(),
            "output": np.asarray(self.output).tolist(),
            "T_es": self.T_es,
            "distances": np.asarray(self.distances).tolist(),
            "seed": self.seed,
        }

    def to_json(self, path):
        _write_json(self.to_dict(), path)

    def to_csv(self, path):
        d = np.asarray(self.distances).reshape(self.T_es + 1, -1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step"] + [f"dist_{i}" for i in range(d.shape[1])])
            for k, row in enumerate(d):
                w.writerow([self.T_es - k] + [repr(float(v)) for v in row])


@dataclass(eq=False)
class BoundProfile:
    K: np.ndarray  # K_t for t = T_es..1
    S: np.ndarray
    B: np.ndarray  # B_t for t = T_es..0
    measured: np.ndarray = None
    violations: list = field(default_factory=list)

    @property
    def sound(self):
        return not self.violations

    def to_dict(self):
        return {
            "K": self.K.tolist(),
            "S": self.S.tolist(),
            "B": self.B.tolist(),
            "measured": None if self.measured is None else np.asarray(self.measured).tolist(),
            "violations": self.violations,
        }

    def to_json(self, path):
        _write_json(self.to_dict(), path)

    def to_csv(self, path):
        T_es = self.K.size
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "K", "S", "B", "measured"])
            for k in range(T_es + 1):
                K = repr(float(self.K[k])) if k < T_es else ""
                S = repr(float(self.S[k])) if k < T_es else ""
                meas = "" if self.measured is None else repr(float(np.max(self.measured[k])))
                w.writerow([T_es - k, K, S, repr(float(self.B[k])), meas])


def _check_pair(m_src, m_tgt):
    if not m_src.schedule.same_as(m_tgt.schedule):
        raise ScheduleMismatchError("translation: source and target estimators use different schedules")


def cycle_translate(m_src, m_tgt, x0, T_es, rng, cond_src=None, cond_tgt=None, family=None, seed=None):
    """Encode ``x0`` under the source up to step ``T_es`` and replay the noise under the target.

    With ``m_src is m_tgt`` and equal conditions this is encode-then-decode and
    returns ``x0`` up to rounding.  ``x0`` may be batched.
    """
    _check_pair(m_src, m_tgt)
    T_es = int(T_es)
    if not 0 <= T_es <= m_src.T:
        raise ConfigError(f"cycle_translate: T_es={T_es} outside 0..{m_src.T}")
    rng = as_rng(rng)
    family = m_src.posterior if family is None else family
    traj = posterior_sample(m_src.schedule, x0, family, rng, t_stop=T_es)
    eps = residuals(m_src, traj, cond_src)
    xhat = traj.x[T_es]
    dists = [_norm(traj.x[T_es] - xhat)]
    for k, t in enumerate(range(T_es, 0, -1)):
        xhat = m_tgt.mean(xhat, t, cond_tgt) + m_tgt.sigma(t) * eps[k]
        dists.append(_norm(traj.x[t - 1] - xhat))
    return TranslationResult(np.asarray(x0), xhat, T_es, np.stack(dists), seed)


def sdedit_refine(m, x, T_sd, rng, cond=None):
    """Noise ``x`` to step ``T_sd`` with fresh noise, then run the stochastic reverse chain."""
    T_sd = int(T_sd)
    if not 0 <= T_sd <= m.T:
        raise ConfigError(f"sdedit: T_sd={T_sd} outside 0..{m.T}")
    x = np.asarray(x, dtype=np.float64)
    if T_sd == 0:
        return x.copy()
    rng = as_rng(rng)
    xt = forward_marginal(m.schedule, x, T_sd, rng.standard_normal(x.shape))
    for t in range(T_sd, 0, -1):
        xt = m.mean(xt, t, cond) + m.sigma(t) * rng.standard_normal(x.shape)
    return xt


def invert_step(m, x_prev, t, cond=None, max_iter=50, tol=1e-10):
    """Solve mu(x_t, t) = x_prev for x_t.

    Uses the affine split mu = a x + b eps_hat(x) as a fixed-point map
    ``x <- (x_prev - b eps_hat(x)) / a``; falls back to bisection for
    one-dimensional data when the iteration does not contract.
    """
    x_prev = np.asarray(x_prev, dtype=np.float64)
    a, b, _ = m.coefficients(t)
    x = x_prev.copy()
    for _ in range(max_iter):
        x_new = (x_prev - b * m.eps(x, t, cond)) / a
        if not np.all(np.isfinite(x_new)):
            break
        step = np.max(np.abs(x_new - x))
        x = x_new
        if step <= tol * max(1.0, np.max(np.abs(x))):
            return x
    if x_prev.shape[-1] == 1:
        return _bisect_step(m, x_prev, t, cond, tol)
    raise NonConvergenceError(
        f"ddib: inversion of step {t} did not converge", module="translation", step=int(t)
    )


def _bisect_step(m, x_prev, t, cond, tol):
    f = lambda x: m.mean(x, t, cond) - x_prev  # noqa: E731
    width = 1.0 + np.abs(x_prev)
    lo, hi = x_prev - width, x_prev + width
    for _ in range(200):
        flo, fhi = f(lo), f(hi)
        ok = np.sign(flo) * np.sign(fhi) <= 0
        if np.all(ok):
            break
        width = np.where(ok, width, 2 * width)
        lo, hi = np.where(ok, lo, x_prev - width), np.where(ok, hi, x_prev + width)
    else:
        raise NonConvergenceError(f"ddib: no bracket at step {t}", module="translation", step=int(t))
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        left = np.sign(fm) == np.sign(f(lo))
        lo, hi = np.where(left, mid, lo), np.where(left, hi, mid)
        if np.all(hi - lo <= tol * np.maximum(1.0, np.abs(mid))):
            break
    return 0.5 * (lo + hi)


def ddib_encode(m, x0, T_g=None, cond=None):
    """Run the deterministic path backwards: x_0 -> x_T on a ``T_g`` ladder."""
    mg = m if T_g is None else m.respaced(T_g)
    x = np.asarray(x0, dtype=np.float64)
    for t in range(1, mg.T + 1):
        x = invert_step(mg, x, t, cond)
    return x


def ddib_translate(m_src, m_tgt, x0, T_g=None, cond_src=None, cond_tgt=None):
    """Deterministic encode under the source, deterministic decode under the target."""
    _check_pair(m_src, m_tgt)
    for m in (m_src, m_tgt):
        if getattr(m, "kind", "ddim") != "ddim" or m.eta != 0:
            raise ConfigError("ddib: both estimators must be deterministic DDIM (eta = 0)")
    x_T = ddib_encode(m_src, x0, T_g, cond_src)
    return generate_deterministic(m_tgt, x_T, T_g, cond_tgt)


def _probes(region, n, rng, dim):
    lo, hi = (np.broadcast_to(np.asarray(v, dtype=np.float64), (dim,)) for v in region)
    return lo + (hi - lo) * rng.random((n, dim))


def estimate_lipschitz(m, t, cond=None, region=(-4.0, 4.0), n_probes=256, rng=0, dim=None, perturbation=None):
    """Largest ratio ||mu(x) - mu(x')|| / ||x - x'|| over random probe pairs inside ``region``.

    Pairs are independent uniform points, or ``x' = x + perturbation * u`` for a
    random unit ``u`` when ``perturbation`` is set.  The result is a lower
    estimate of the Lipschitz constant restricted to the box.
    """
    rng = as_rng(rng)
    dim = dim or getattr(getattr(m, "eps_model", None), "dim", 1)
    x = _probes(region, n_probes, rng, dim)
    if perturbation is None:
        y = _probes(region, n_probes, rng, dim)
    else:
        u = rng.standard_normal((n_probes, dim))
        y = x + perturbation * u / _norm(u)[:, None]
    dx = _norm(x - y)
    keep = dx > 0
    ratio = _norm(m.mean(x, t, cond) - m.mean(y, t, cond))[keep] / dx[keep]
    return float(np.max(ratio))


def estimate_condition_gap(m, t, cond_a, cond_b, region=(-4.0, 4.0), n_probes=256, rng=0, dim=None, m_b=None):
    """Largest ||mu(x | a) - mu(x | b)|| over uniform probes in ``region``.

    ``m_b`` compares two separate models instead of two labels of one model.
    """
    rng = as_rng(rng)
    dim = dim or getattr(getattr(m, "eps_model", None), "dim", 1)
    x = _probes(region, n_probes, rng, dim)
    other = m if m_b is None else m_b
    return float(np.max(_norm(m.mean(x, t, cond_a) - other.mean(x, t, cond_b))))


def probe_region(gm, s, t, width=4.0):
    """Box covering every component of the x_t marginal to +/- ``width`` standard deviations."""
    a = s.alpha_bar(t)
    sd = np.sqrt(a * gm.variances + 1.0 - a)
    c = np.sqrt(a) * gm.means
    return np.min(c - width * sd, axis=0), np.max(c + width * sd, axis=0)


def propagate_bound(K, S, measured=None):
    """Unroll B_{t-1} = (K_t + 1) B_t + S_t from B_{T_es} = 0.

    ``K`` and ``S`` are ordered by step t = T_es..1; ``measured`` (optional)
    holds realized distances for t = T_es..0, possibly with trailing batch
    axes.  Any measured distance above its bound is recorded as a violation.
    """
    K = np.asarray(K, dtype=np.float64).reshape(-1)
    S = np.asarray(S, dtype=np.float64).reshape(-1)
    if K.shape != S.shape:
        raise ConfigError("propagate_bound: K and S must have equal length")
    if np.any(K < 0) or np.any(S < 0):
        raise ConfigError("propagate_bound: K and S entries must be nonnegative")
    B = np.zeros(K.size + 1)
    for k in range(K.size):
        B[k + 1] = (K[k] + 1.0) * B[k] + S[k]
    violations = []
    if measured is not None:
        measured = np.asarray(measured, dtype=np.float64)
        if measured.shape[0] != B.size:
            raise ConfigError("propagate_bound: need one measured distance per step T_es..0")
        flat = measured.reshape(B.size, -1)
        for k in range(B.size):
            worst = float(np.max(flat[k]))
            if worst > B[k] + BOUND_SLACK * max(1.0, B[k]):
                violations.append({"step": int(K.size - k), "measured": worst, "bound": float(B[k])})
    return BoundProfile(K, S, B, measured, violations)
