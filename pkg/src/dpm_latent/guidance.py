"""Plug-and-play guidance in latent space.

The guided latent density is p(z | C) ∝ N(z; 0, I) exp(-lam * E(G(z) | C)).
:func:`langevin_guide` samples it with unadjusted Langevin dynamics through
any generator exposing ``vjp``; :func:`rejection_oracle` draws exact samples
for nonnegative energies and serves as the reference.

Energies take batched inputs ``(..., d)`` and return values of shape ``(...)``.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import log_softmax

from .errors import ConfigError, DivergenceError, InvalidProbabilityError, NumericalError, StarvationError
from .rng import as_rng

E_MAX = 50.0


class EnergyFunction:
    """Interface: ``value(x)`` >= 0 and ``grad(x)`` = dE/dx."""

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.value(x)


class QuadraticEnergy(EnergyFunction):
    """E(x) = ||x - center||^2 / 2."""

    def __init__(self, center=0.0):
        self.center = np.asarray(center, dtype=np.float64)

    def value(self, x):
        return 0.5 * np.sum((np.asarray(x) - self.center) ** 2, axis=-1)

    def grad(self, x):
        return np.asarray(x, dtype=np.float64) - self.center


class IndicatorEnergy(EnergyFunction):
    """0 inside the box [lo, hi], +inf outside (rejection oracle only: no gradient)."""

    def __init__(self, lo, hi):
        self.lo, self.hi = np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64)

    def value(self, x):
        inside = np.all((x >= self.lo) & (x <= self.hi), axis=-1)
        return np.where(inside, 0.0, np.inf)

    def grad(self, x):
        raise NotImplementedError("indicator energy has no gradient")


# -- differentiable feature maps standing in for perception networks -------


class LinearMap:
    """x -> A x + c.  ``LinearMap.identity(d)`` is the identity map."""

    def __init__(self, A, c=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        self.c = np.zeros(self.A.shape[0]) if c is None else np.asarray(c, dtype=np.float64)

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d))

    def __call__(self, x):
        return np.asarray(x, dtype=np.float64) @ self.A.T + self.c

    def vjp(self, x, cot):
        return np.asarray(cot, dtype=np.float64) @ self.A


class RandomFeatureMap:
    """Fixed smooth random features x -> tanh(W x + b), W ~ N(0, scale^2 / d)."""

    def __init__(self, in_dim, out_dim, seed=0, scale=1.0):
        rng = as_rng(seed)
        self.W = rng.standard_normal((out_dim, in_dim)) * scale / np.sqrt(in_dim)
        self.b = 0.1 * rng.standard_normal(out_dim)

    def __call__(self, x):
        return np.tanh(np.asarray(x, dtype=np.float64) @ self.W.T + self.b)

    def vjp(self, x, cot):
        h = self(x)
        return (np.asarray(cot) * (1.0 - h**2)) @ self.W


def random_affine_augmentations(d, L, rng, strength=0.1):
    """``L`` near-identity affine maps: A = I + strength * N(0, 1/d), shift ~ strength * N(0, 1)."""
    rng = as_rng(rng)
    return [
        LinearMap(np.eye(d) + strength * rng.standard_normal((d, d)) / np.sqrt(d), strength * rng.standard_normal(d))
        for _ in range(L)
    ]


def _cosine_and_grad(u, v):
    """cos<u, v> along the last axis and its gradient w.r.t. ``u``."""
    nu = np.linalg.norm(u, axis=-1, keepdims=True)
    nv = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(nu == 0) or np.any(nv == 0):
        raise NumericalError("cosine energy: zero-norm embedding", module="guidance")
    c = np.sum(u * v, axis=-1, keepdims=True) / (nu * nv)
    return c[..., 0], v / (nu * nv) - c * u / nu**2


class AugmentedCosineEnergy(EnergyFunction):
    """E(x) = mean_l (1 - cos<embed(aug_l(x)), target>)."""

    def __init__(self, embed, target, augmentations):
        if len(augmentations) < 1:
            raise ConfigError("augmented cosine energy needs at least one augmentation")
        self.embed = embed
        self.target = np.asarray(target, dtype=np.float64)
        if np.linalg.norm(self.target) == 0:
            raise NumericalError("cosine energy: zero-norm target", module="guidance")
        self.augmentations = list(augmentations)

    def value(self, x):
        total = 0.0
        for aug in self.augmentations:
            total = total + (1.0 - _cosine_and_grad(self.embed(aug(x)), self.target)[0])
        return total / len(self.augmentations)

    def grad(self, x):
        total = 0.0
        for aug in self.augmentations:
            y = aug(x)
            _, dc = _cosine_and_grad(self.embed(y), self.target)
            total = total - aug.vjp(x, self.embed.vjp(y, dc))
        return total / len(self.augmentations)


def augmented_cosine_energy(embed, target_vec, augmentations):
    return AugmentedCosineEnergy(embed, target_vec, augmentations)


def embedding_cosine_energy(embed, reference):
    """E(x) = 1 - cos<embed(x), embed(reference)>, in [0, 2]."""
    reference = np.asarray(reference, dtype=np.float64)
    identity = LinearMap.identity(reference.shape[-1])
    return AugmentedCosineEnergy(embed, embed(reference), [identity])


class LinearSoftmaxClassifier:
    """Class probabilities softmax(W x + b)."""

    def __init__(self, W, b=None):
        self.W = np.atleast_2d(np.asarray(W, dtype=np.float64))
        self.b = np.zeros(self.W.shape[0]) if b is None else np.asarray(b, dtype=np.float64)

    @classmethod
    def binary(cls, w, bias=0.0):
        """P(1 | x) = sigmoid(w . x + bias)."""
        w = np.asarray(w, dtype=np.float64)
        return cls(np.stack([np.zeros_like(w), w]), np.array([0.0, bias]))

    def log_probs(self, x):
        return log_softmax(np.asarray(x, dtype=np.float64) @ self.W.T + self.b, axis=-1)

    def probs(self, x):
        return np.exp(self.log_probs(x))

    def log_prob_grad(self, x, cls):
        p = self.probs(x)
        onehot = np.zeros(self.W.shape[0])
        onehot[cls] = 1.0
        return (onehot - p) @ self.W


class ClassifierEnergy(EnergyFunction):
    """E(x) = min(-log P(target | x), e_max)."""

    def __init__(self, classifier, target_class, e_max=E_MAX):
        self.classifier = classifier
        self.target_class = int(target_class)
        self.e_max = float(e_max)

    def _log_p(self, x):
        logp = self.classifier.log_probs(x)
        p = np.exp(logp)
        if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(np.abs(p.sum(-1) - 1.0) > 1e-9):
            raise InvalidProbabilityError("classifier returned an invalid probability vector")
        return logp[..., self.target_class]

    def value(self, x):
        return np.minimum(-self._log_p(x), self.e_max)

    def grad(self, x):
        clamped = -self._log_p(x) >= self.e_max
        g = -self.classifier.log_prob_grad(x, self.target_class)
        return np.where(np.asarray(clamped)[..., None], 0.0, g)


def classifier_energy(classifier, target_class, e_max=E_MAX):
    return ClassifierEnergy(classifier, target_class, e_max)


# -- samplers ---------------------------------------------------------------


@dataclass(frozen=True)
class GuidanceConfig:
    lam: float = 1.0
    n_steps: int = 200
    step_size: float = 0.05
    seed: int = 0
    n_chains: int = 256
    guard_radius: float = 1e6
    keep: int = 1
    thin: int = 1

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("guidance: lambda must be >= 0")
        if self.n_steps > 0 and self.step_size <= 0:
            raise ConfigError("guidance: step_size must be > 0")


def latent_energy_grad(gen, energy, z, lam):
    """Gradient of log N(z; 0, I) - lam * E(G(z)) and the energies at G(z)."""
    x, pullback = gen.vjp(z)
    e = energy.value(x)
    if lam == 0:
        return -z, e
    return -z - lam * pullback(energy.grad(x)), e


def langevin_guide(gen, energy, cfg, rng=None, z0=None):
    """Unadjusted Langevin chains on the guided latent density.

    Each iteration is ``z += (step/2) * grad(log p(z) - lam E(G(z))) + sqrt(step) * noise``.
    Returns the final states, shape ``(n_chains, dim)``.  With ``cfg.keep > 1``
    the chains run on past the burn-in of ``n_steps`` iterations and every
    ``thin``-th state is kept, giving shape ``(keep, n_chains, dim)``.
    """
    rng = as_rng(cfg.seed if rng is None else rng)
    z = rng.standard_normal((cfg.n_chains, gen.dim)) if z0 is None else np.array(z0, dtype=np.float64)
    half = 0.5 * cfg.step_size
    noise_scale = np.sqrt(cfg.step_size)

    def step(z):
        g, _ = latent_energy_grad(gen, energy, z, cfg.lam)
        z = z + half * g + noise_scale * rng.standard_normal(z.shape)
        radius = np.max(np.linalg.norm(z, axis=-1))
        if not np.isfinite(radius) or radius > cfg.guard_radius:
            raise DivergenceError("langevin: chain left the guard radius", module="guidance", radius=float(radius))
        return z

    for _ in range(cfg.n_steps):
        z = step(z)
    if cfg.keep <= 1:
        return z
    kept = [z]
    while len(kept) < cfg.keep:
        for _ in range(cfg.thin):
            z = step(z)
        kept.append(z)
    return np.stack(kept)


def rejection_oracle(gen, energy, lam, rng, n_accepted, batch=4096, max_proposals=10**8, return_stats=False):
    """Exact draws from p(z | C) for E >= 0: propose z ~ N(0, I), accept w.p. exp(-lam E(G(z)))."""
    rng = as_rng(rng)
    accepted, n_prop = [], 0
    n_acc = 0
    while n_acc < n_accepted:
        z = rng.standard_normal((batch, gen.dim))
        e = energy.value(gen(z))
        if np.any(e < 0):
            raise ConfigError("rejection oracle needs a nonnegative energy")
        keep = rng.random(batch) < np.exp(-lam * e)
        accepted.append(z[keep])
        n_acc += int(keep.sum())
        n_prop += batch
        if n_prop >= max_proposals or (n_prop >= 10**6 and n_acc / n_prop < 1e-6):
            if n_acc < n_accepted:
                raise StarvationError(f"rejection oracle: acceptance rate {n_acc / n_prop:.2e} after {n_prop} proposals")
    z = np.concatenate(accepted)[:n_accepted]
    if return_stats:
        return z, {"proposals": n_prop, "accepted": n_acc, "acceptance_rate": n_acc / n_prop}
    return z


def guidance_report(cfg, energies, stats=None):
    """JSON-ready summary of a guided run."""
    energies = np.asarray(energies, dtype=np.float64)
    return {
        "config": asdict(cfg),
        "final_energy": energies.tolist(),
        "acceptance": stats,
        "summary": {"mean_energy": float(energies.mean()), "std_energy": float(energies.std())},
    }


def write_guidance_report(path, cfg, energies, stats=None):
    with open(path, "w") as fh:
        json.dump(guidance_report(cfg, energies, stats), fh, indent=2)


# -- latent direction editing ----------------------------------------------


def edit_objective(gen, cls_energy, embed, n, base_z, lambda_cls):
    """Mean over base codes of lambda_cls E_cls(G(z+n)) - cos<embed(G(z+n)), embed(G(z))>.

    Returns ``(value, gradient w.r.t. n)``.
    """
    base_z = np.atleast_2d(base_z)
    ref = embed(gen(base_z))
    x, pullback = gen.vjp(base_z + n)
    u = embed(x)
    cos, dcos = _cosine_and_grad(u, ref)
    value = lambda_cls * cls_energy.value(x) - cos
    cot = -embed.vjp(x, dcos)
    if lambda_cls:
        cot = cot + lambda_cls * cls_energy.grad(x)
    grad = pullback(cot)
    if not np.all(np.isfinite(value)):
        raise NumericalError("edit objective is non-finite", module="guidance")
    return float(np.mean(value)), np.mean(grad, axis=0)


def optimize_edit_direction(gen, cls_energy, embed, r, lambda_cls, base_z, steps=200, lr=0.1, rng=0, n0=None):
    """Projected gradient descent for the edit direction on the sphere ||n|| = r."""
    if r <= 0:
        raise ConfigError("edit direction radius must be positive")
    rng = as_rng(rng)
    n = rng.standard_normal(gen.dim) if n0 is None else np.array(n0, dtype=np.float64)
    n *= r / np.linalg.norm(n)
    for _ in range(steps):
        _, g = edit_objective(gen, cls_energy, embed, n, base_z, lambda_cls)
        n = n - lr * g
        n *= r / np.linalg.norm(n)
    return n
