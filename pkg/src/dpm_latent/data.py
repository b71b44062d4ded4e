"""Synthetic domains: Gaussian-mixture vectors and paired toy-image domains.

A :class:`DomainSpec` fully determines a domain: same spec, same distribution
and the same default random stream.  Toy-image domains draw squares (domain A)
and circles (domain B) that share one nuisance distribution (sub-pixel
position, size, background and foreground levels), so that translation
faithfulness can be scored with SSIM.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .models.mixture import GaussianMixture
from .rng import make_rng

KINDS = ("gaussian-mixture", "toy-images")
SHAPES = ("square", "circle")
RGB_TINT = np.array([1.0, 0.8, 0.6])  # fixed colour of 3-channel images

# integer stream keys for make_rng(seed, key, ...)
_STREAM_MIXTURE = 1
_STREAM_IMAGES = 2
_STREAM_PAIRS = 3


@dataclass
class DomainSpec:
    """Description of a synthetic domain.

    gaussian-mixture: ``weights``, ``means`` (list of vectors or scalars),
    ``variances`` (per component: scalar or vector), optional ``labels``.

    toy-images: ``image_size``, ``channels``, ``peak``; nuisance ranges
    ``position_jitter`` (max offset of the shape centre from the image centre,
    pixels), ``size_range`` (half-width / radius, pixels), ``background_range``
    and ``foreground_range`` (intensities as fractions of ``peak``);
    ``shapes`` names the shape class of domain A and domain B.
    """

    kind: str = "gaussian-mixture"
    seed: int = 0
    weights: list = None
    means: list = None
    variances: list = None
    labels: list = None
    image_size: int = 16
    channels: int = 1
    peak: float = 1.0
    position_jitter: float = 3.0
    size_range: tuple = (4.0, 4.0)
    background_range: tuple = (0.0, 0.0)
    foreground_range: tuple = (1.0, 1.0)
    shapes: tuple = SHAPES

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"domain: unknown kind {self.kind!r} (expected one of {KINDS})")
        if int(self.seed) < 0:
            raise ConfigError("domain: seed must be non-negative")
        for name in ("size_range", "background_range", "foreground_range", "shapes"):
            setattr(self, name, tuple(getattr(self, name)))
        if self.kind == "gaussian-mixture":
            if self.weights is None or self.means is None or self.variances is None:
                raise ConfigError("domain: gaussian-mixture needs weights, means and variances")
            return
        for name in ("size_range", "background_range", "foreground_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"domain: {name} has lo > hi")
            setattr(self, name, (float(lo), float(hi)))
        if not 8 <= self.image_size <= 64:
            raise ConfigError("domain: image_size must lie in 8..64")
        if self.channels not in (1, 3):
            raise ConfigError("domain: channels must be 1 or 3")
        if self.peak <= 0:
            raise ConfigError("domain: peak must be positive")
        if self.position_jitter < 0 or self.size_range[0] <= 0:
            raise ConfigError("domain: position_jitter must be >= 0 and sizes > 0")
        for lo, hi in (self.background_range, self.foreground_range):
            if lo < 0 or hi > 1:
                raise ConfigError("domain: intensity ranges are fractions of peak in [0, 1]")
        self.shapes = tuple(self.shapes)
        if len(self.shapes) != 2 or any(sh not in SHAPES for sh in self.shapes):
            raise ConfigError(f"domain: shapes must be two of {SHAPES}")

    def to_dict(self):
        d = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items() if v is not None}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"domain: unknown field(s) {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


class MixtureSampler:
    """I.i.d. draws from a :class:`GaussianMixture`; owns a default stream."""

    def __init__(self, gm, seed):
        self.gm = gm
        self._rng = make_rng(seed, _STREAM_MIXTURE)

    def __call__(self, n, rng=None, cond=None):
        return self.gm.select(cond).sample(int(n), self._rng if rng is None else rng)


def make_gaussian_mixture_domain(spec):
    """Return ``(GaussianMixture, sampler)`` for a gaussian-mixture spec."""
    if isinstance(spec, dict):
        spec = DomainSpec.from_dict(spec)
    if spec.kind != "gaussian-mixture":
        raise ConfigError(f"domain: expected a gaussian-mixture spec, got {spec.kind!r}")
    w = np.asarray(spec.weights, dtype=np.float64)
    means = np.asarray(spec.means, dtype=np.float64).reshape(w.size, -1)
    gm = GaussianMixture(w, means, spec.variances, spec.labels)
    return gm, MixtureSampler(gm, spec.seed)


def render_shape(shape, cx, cy, size, background, foreground, image_size):
    """Anti-aliased shape on an ``image_size`` grid; coordinates are pixel centres.

    Coverage is ``clip(0.5 + signed_distance, 0, 1)``, i.e. a one-pixel linear
    ramp across the boundary.  Inputs may be arrays of shape ``(n,)``.
    """
    r = np.arange(image_size) + 0.5
    cx, cy, size = (np.asarray(v, dtype=np.float64)[..., None, None] for v in (cx, cy, size))
    dx = np.abs(r[None, :] - cx)
    dy = np.abs(r[:, None] - cy)
    if shape == "square":
        sd = size - np.maximum(dx, dy)
    elif shape == "circle":
        sd = size - np.hypot(dx, dy)
    else:
        raise ConfigError(f"domain: unknown shape {shape!r}")
    cover = np.clip(0.5 + sd, 0.0, 1.0)
    bg = np.asarray(background, dtype=np.float64)[..., None, None]
    fg = np.asarray(foreground, dtype=np.float64)[..., None, None]
    return bg + (fg - bg) * cover


class ToyImageDomain:
    """Sampler over toy images of one shape class.

    ``sample(n, rng)`` returns an array of shape ``(n, H, W)`` (or
    ``(n, H, W, 3)``) with values in ``[0, peak]``.
    """

    def __init__(self, spec, shape, stream):
        self.spec = spec
        self.shape = shape
        self._rng = make_rng(spec.seed, _STREAM_IMAGES, stream)

    @property
    def image_shape(self):
        n = self.spec.image_size
        return (n, n) if self.spec.channels == 1 else (n, n, 3)

    @property
    def dim(self):
        return int(np.prod(self.image_shape))

    def sample_nuisance(self, n, rng=None):
        rng = self._rng if rng is None else rng
        sp = self.spec
        c = sp.image_size / 2.0
        u = rng.random((n, 5))
        lerp = lambda rg, col: rg[0] + (rg[1] - rg[0]) * u[:, col]  # noqa: E731
        return {
            "cx": c + sp.position_jitter * (2 * u[:, 0] - 1),
            "cy": c + sp.position_jitter * (2 * u[:, 1] - 1),
            "size": lerp(sp.size_range, 2),
            "background": lerp(sp.background_range, 3),
            "foreground": lerp(sp.foreground_range, 4),
        }

    def render(self, nuisance):
        sp = self.spec
        img = render_shape(
            self.shape,
            nuisance["cx"],
            nuisance["cy"],
            nuisance["size"],
            nuisance["background"],
            nuisance["foreground"],
            sp.image_size,
        )
        if sp.channels == 3:
            img = img[..., None] * RGB_TINT
        return np.clip(img, 0.0, 1.0) * sp.peak

    def sample(self, n, rng=None, return_nuisance=False):
        nu = self.sample_nuisance(int(n), rng)
        img = self.render(nu)
        return (img, nu) if return_nuisance else img


class ToyImagePair:
    """Domain A and domain B plus a joint sampler emitting nuisance-matched pairs."""

    def __init__(self, spec):
        self.spec = spec
        self.a = ToyImageDomain(spec, spec.shapes[0], 0)
        self.b = ToyImageDomain(spec, spec.shapes[1], 1)
        self._rng = make_rng(spec.seed, _STREAM_PAIRS)

    def __iter__(self):
        return iter((self.a, self.b))

    def sample_pairs(self, n, rng=None, return_nuisance=False):
        nu = self.a.sample_nuisance(int(n), self._rng if rng is None else rng)
        out = (self.a.render(nu), self.b.render(nu))
        return out + (nu,) if return_nuisance else out


def make_toy_image_domains(spec):
    """Return a :class:`ToyImagePair`; unpack as ``domain_a, domain_b = pair``."""
    if isinstance(spec, dict):
        spec = DomainSpec.from_dict({"kind": "toy-images", **spec})
    if spec.kind != "toy-images":
        raise ConfigError(f"domain: expected a toy-images spec, got {spec.kind!r}")
    return ToyImagePair(spec)


def images_to_vectors(images, peak=1.0):
    """Flatten ``(n, H, W[, C])`` images in ``[0, peak]`` to ``(n, d)`` vectors in ``[-1, 1]``."""
    images = np.asarray(images, dtype=np.float64)
    return (2.0 * images / peak - 1.0).reshape(images.shape[0], -1)


def vectors_to_images(vectors, image_shape, peak=1.0, clip=True):
    """Inverse of :func:`images_to_vectors`; clipping keeps pixels within ``[0, peak]``."""
    img = (np.asarray(vectors, dtype=np.float64) + 1.0) * (peak / 2.0)
    if clip:
        img = np.clip(img, 0.0, peak)
    return img.reshape((-1,) + tuple(image_shape))
