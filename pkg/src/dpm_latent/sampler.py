"""Diffusion samplers as deterministic maps from a Gaussian latent code.

A stochastic sampler consumes ``z = (x_T, eps_T, ..., eps_1)`` and runs
``x_{t-1} = mu(x_t, t) + sigma_t * eps_t`` down to ``x_0``; a deterministic
sampler consumes ``x_T`` only.  Codes may be batched: ``x_T`` has shape
``(*batch, d)`` and ``eps`` has shape ``(T, *batch, d)`` with ``eps[0]`` the
noise of step T.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError

LATENT_MAGIC = b"DPMZ"
LATENT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass(eq=False)
class LatentCode:
    x_T: np.ndarray
    eps: np.ndarray

    def __post_init__(self):
        self.x_T = np.asarray(self.x_T, dtype=np.float64)
        self.eps = np.asarray(self.eps, dtype=np.float64)
        if self.eps.ndim != self.x_T.ndim + 1 or self.eps.shape[1:] != self.x_T.shape:
            raise ConfigError(f"latent: eps shape {self.eps.shape} incompatible with x_T {self.x_T.shape}")

    @property
    def steps(self):
        return self.eps.shape[0]

    @property
    def data_dim(self):
        return self.x_T.shape[-1]

    @property
    def batch_shape(self):
        return self.x_T.shape[:-1]

    @property
    def dim(self):
        return self.data_dim * (self.steps + 1)

    def eps_at(self, t):
        """Noise consumed by reverse step ``t`` (1-based)."""
        return self.eps[self.steps - t]

    def pack(self):
        """Flat vector(s) of length ``d_I * (T + 1)``: x_T, eps_T, ..., eps_1."""
        parts = [self.x_T] + [self.eps[k] for k in range(self.steps)]
        return np.concatenate(parts, axis=-1)

    @classmethod
    def unpack(cls, flat, data_dim):
        flat = np.asarray(flat, dtype=np.float64)
        total = flat.shape[-1]
        if total % data_dim:
            raise ConfigError(f"latent: length {total} not a multiple of d_I={data_dim}")
        blocks = np.split(flat, total // data_dim, axis=-1)
        return cls(blocks[0], np.stack(blocks[1:]) if len(blocks) > 1 else np.empty((0,) + blocks[0].shape))

    def __getitem__(self, idx):
        return LatentCode(self.x_T[idx], self.eps[(slice(None),) + np.index_exp[idx]])

    def to_bytes(self):
        if self.batch_shape:
            raise ConfigError("latent: binary format holds a single code")
        header = _HEADER.pack(LATENT_MAGIC, LATENT_VERSION, self.data_dim, self.steps)
        return header + self.pack().astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob):
        magic, version, d, T = _HEADER.unpack_from(blob)
        if magic != LATENT_MAGIC or version != LATENT_VERSION:
            raise ConfigError("latent: bad magic or version")
        body = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
        if body.size != d * (T + 1):
            raise ConfigError(f"latent: expected {d * (T + 1)} values, found {body.size}")
        return cls.unpack(body.astype(np.float64), d)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass(frozen=True)
class SamplerConfig:
    eta: float = 0.0
    T_g: int = None
    seed: int = 0

    def validate(self, T):
        if self.eta < 0:
            raise ConfigError("sampler: eta must be >= 0")
        if self.T_g is not None and not 1 <= self.T_g <= T:
            raise ConfigError(f"sampler: T_g={self.T_g} must lie in 1..{T}")


def sample_latent(d_I, T, rng, batch=()):
    """Draw z ~ N(0, I) of dimension ``d_I * (T + 1)`` (per batch element)."""
    if d_I < 1 or T < 1:
        raise ConfigError("latent: need d_I >= 1 and T >= 1")
    batch = (int(batch),) if np.isscalar(batch) else tuple(int(b) for b in batch)
    flat = rng.standard_normal(batch + (d_I * (T + 1),))
    return LatentCode.unpack(flat, d_I)


def _check_finite(x, t):
    if not np.all(np.isfinite(x)):
        raise NumericalError(
            f"non-finite state after reverse step {t}",
            module="sampler",
            step=int(t),
            magnitude=float(np.nanmax(np.abs(np.where(np.isfinite(x), x, np.nan)), initial=0.0)),
        )


def generate(m, z, cond=None, return_trajectory=False):
    """x = G(z): the stochastic reverse chain with all noise read from ``z``."""
    if z.steps != m.T:
        raise ConfigError(f"latent has {z.steps} steps, estimator has {m.T}")
    x = z.x_T
    traj = [x] if return_trajectory else None
    for t in range(m.T, 0, -1):
        x = m.mean(x, t, cond) + m.sigma(t) * z.eps_at(t)
        _check_finite(x, t)
        if traj is not None:
            traj.append(x)
    if traj is not None:
        return x, traj[::-1]
    return x


def generate_deterministic(m, x_T, T_g=None, cond=None):
    """Noiseless recursion x_{t-1} = mu(x_t, t) on a ladder of ``T_g`` steps.

    ``m`` should be a deterministic (eta = 0) estimator; its noise term is
    ignored regardless.
    """
    mg = m if T_g is None else m.respaced(T_g)
    x = np.asarray(x_T, dtype=np.float64)
    for t in range(mg.T, 0, -1):
        x = mg.mean(x, t, cond)
        _check_finite(x, t)
    return x


def _stochastic_vjp(m, z, cond):
    x, traj = generate(m, z, cond, return_trajectory=True)

    def pullback(cotangent):
        g = np.broadcast_to(np.asarray(cotangent, dtype=np.float64), x.shape).copy()
        grad_eps = np.empty_like(z.eps)
        for t in range(1, m.T + 1):
            grad_eps[m.T - t] = m.sigma(t) * g
            g = m.mean_vjp(traj[t], t, cond, g)
        return LatentCode(g, grad_eps)

    return x, pullback


def generate_with_grad(m, z, cond, cotangent):
    """Run G(z) and pull ``cotangent`` back onto every block of z.

    Returns ``(x_0, grad)`` where ``grad`` is a :class:`LatentCode` holding
    d<cotangent, G(z)>/dz block by block.
    """
    x, pullback = _stochastic_vjp(m, z, cond)
    return x, pullback(cotangent)


def _deterministic_vjp(mg, x_T, cond):
    xs = [np.asarray(x_T, dtype=np.float64)]
    for t in range(mg.T, 0, -1):
        xs.append(mg.mean(xs[-1], t, cond))
        _check_finite(xs[-1], t)
    xs = xs[::-1]  # xs[t] is x_t

    def pullback(cotangent):
        g = np.broadcast_to(np.asarray(cotangent, dtype=np.float64), xs[0].shape).copy()
        for t in range(1, mg.T + 1):
            g = mg.mean_vjp(xs[t], t, cond, g)
        return g

    return xs[0], pullback


def generate_deterministic_with_grad(m, x_T, cond, cotangent, T_g=None):
    """Deterministic path and the pullback of ``cotangent`` onto ``x_T``."""
    x, pullback = _deterministic_vjp(m if T_g is None else m.respaced(T_g), x_T, cond)
    return x, pullback(cotangent)


class IdentityGenerator:
    """G(z) = z, handy for checking latent-space samplers."""

    def __init__(self, dim):
        self.dim = dim

    def __call__(self, z):
        return np.asarray(z, dtype=np.float64)

    def vjp(self, z):
        return self(z), lambda cot: np.asarray(cot, dtype=np.float64)

    def pullback(self, z, cotangent):
        return self.vjp(z)[1](cotangent)


class StochasticGenerator(IdentityGenerator):
    """Flat-vector view of G over the full latent code (dimension d_I * (T + 1))."""

    def __init__(self, m, data_dim, cond=None):
        self.m = m
        self.data_dim = data_dim
        self.cond = cond
        self.dim = data_dim * (m.T + 1)

    def __call__(self, z):
        return generate(self.m, LatentCode.unpack(z, self.data_dim), self.cond)

    def vjp(self, z):
        x, pullback = _stochastic_vjp(self.m, LatentCode.unpack(z, self.data_dim), self.cond)
        return x, lambda cot: pullback(cot).pack()


class DeterministicGenerator(IdentityGenerator):
    """Flat-vector view of the deterministic path, latent = x_T on a ``T_g`` ladder."""

    def __init__(self, m, data_dim, T_g=None, cond=None):
        self.m = m if T_g is None else m.respaced(T_g)
        self.data_dim = data_dim
        self.cond = cond
        self.dim = data_dim

    def __call__(self, z):
        return generate_deterministic(self.m, z, None, self.cond)

    def vjp(self, z):
        return _deterministic_vjp(self.m, z, self.cond)
