"""Smoke suite of closed-form and degenerate cases, grouped by module.

:func:`selftest` runs every check, prints one line per module with its pass
count, and reports each failure together with the module it belongs to.
"""

import numpy as np

from . import guidance as gd
from . import metrics as mt
from .data import DomainSpec, make_gaussian_mixture_domain, make_toy_image_domains
from .encoder import dpm_encode, posterior_sample
from .errors import ConfigError
from .models import (
    GaussianMixture,
    TinyDenoiser,
    TrainConfig,
    denoiser_loss,
    denoiser_train,
    denoiser_vjp,
    gm_mean_estimator,
    gm_posterior_x0_mean,
    score_to_mean,
)
from .models.denoiser import N_TIME_FEATURES
from .rng import make_rng
from .sampler import IdentityGenerator, LatentCode, generate, generate_deterministic, generate_with_grad, sample_latent
from .schedule import NoiseSchedule, ddim_sigma, forward_marginal, linear_schedule
from .translation import (
    cycle_translate,
    ddib_translate,
    estimate_condition_gap,
    estimate_lipschitz,
    propagate_bound,
    sdedit_refine,
)

MODULES = ("schedule", "models", "sampler", "encoder", "translation", "guidance", "metrics", "data")


def close(a, b, tol=1e-12):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if not np.allclose(a, b, rtol=tol, atol=tol):
        raise AssertionError(f"{a} != {b}")


def raises(exc, fn):
    try:
        fn()
    except exc:
        return
    raise AssertionError(f"expected {exc.__name__}")


class _Affine:
    """Scalar test estimator mu(x) = a x + b with constant sigma."""

    def __init__(self, a, b=0.0, sigma=0.0, T=1):
        self.a, self.b, self._sigma = a, b, sigma
        self.schedule = linear_schedule(0.1, 0.1, T)
        self.T = T

    def mean(self, x, t, cond=None):
        return self.a * np.asarray(x, dtype=np.float64) + self.b

    def sigma(self, t):
        return self._sigma

    def mean_vjp(self, x, t, cond, cot):
        return self.a * np.asarray(cot, dtype=np.float64)


def _sym_gm(var=0.25, labels=None):
    return GaussianMixture([0.5, 0.5], [[-2.0], [2.0]], [[var], [var]], labels)


def _schedule_checks():
    s = linear_schedule(1e-4, 0.02, 1000)
    yield "linear endpoints", lambda: (close(s.beta(1), 1e-4), close(s.beta(1000), 0.02))
    s2 = linear_schedule(0.1, 0.2, 2)
    yield "two-step products", lambda: (
        close(s2.betas, [0.1, 0.2]),
        close(s2.alphas, [0.9, 0.8]),
        close(s2.alpha_bars, [0.9, 0.72]),
    )
    yield "single step", lambda: close(linear_schedule(0.5, 0.5, 1).alpha_bars, [0.5])
    yield "ddim sigma eta=0", lambda: close([ddim_sigma(s, t, 0.0) for t in (1, 10, 1000)], 0.0)
    yield "ddim sigma eta=1 t=1", lambda: close(ddim_sigma(s, 1, 1.0), 0.0)
    s64 = NoiseSchedule([0.36])
    yield "marginal zero noise", lambda: close(forward_marginal(s64, 1.0, 1, 0.0), 0.8)
    yield "marginal zero signal", lambda: close(forward_marginal(s64, 0.0, 1, 0.5), 0.3)
    yield "beta outside (0,1) rejected", lambda: raises(ConfigError, lambda: NoiseSchedule([0.1, 1.5]))


def _models_checks():
    s = linear_schedule(1e-4, 0.02, 100)
    s_half = NoiseSchedule([0.5])
    point = GaussianMixture([1.0], [[0.7]], [[1e-14]])
    yield "point-mass posterior", lambda: close(gm_posterior_x0_mean(point, s_half, np.array([[3.0], [-5.0]]), 1), 0.7, 1e-6)
    yield "symmetric posterior", lambda: close(gm_posterior_x0_mean(_sym_gm(), s, np.zeros((1, 1)), 50), 0.0)
    gm1 = GaussianMixture([1.0], [[0.0]], [[1.0]])
    yield "option-1 sigma", lambda: close(
        [gm_mean_estimator(gm1, s, "ddpm-opt1").sigma(t) for t in (1, 50, 100)], np.sqrt(s.betas[[0, 49, 99]])
    )

    def ddim_t1():
        m = gm_mean_estimator(_sym_gm(), s, "ddim", 0.0)
        x = np.array([[0.3], [-1.2]])
        close(m.mean(x, 1), m.x0(x, 1), 1e-12)

    yield "ddim eta=0 at t=1 gives x0", ddim_t1

    def score_arith():
        m = score_to_mean(lambda x, t: 0.5 + 0 * x, lambda x, t: 0.1 + 0 * x, NoiseSchedule([0.5]), sigmas=[0.2])
        close(m.mean(np.array([1.0]), 1), 0.92)

    yield "score mean arithmetic", score_arith

    def score_identity():
        m = score_to_mean(lambda x, t: 0 * x, lambda x, t: 0 * x, s)
        close(m.mean(np.array([1.7, -2.0]), 7), [1.7, -2.0])

    yield "zero score and drift", score_identity

    data = make_rng(0).standard_normal((64, 2))

    def zero_init_loss():
        net = TinyDenoiser.init(2, 8, s.T, make_rng(1))
        close(denoiser_loss(net, data, s, make_rng(2), n_samples=20000), 2.0, 0.05)

    yield "zero-init loss = dim", zero_init_loss

    def train_deterministic():
        cfg = TrainConfig(steps=20, batch_size=16, hidden=8)
        a, b = denoiser_train(data, s, cfg), denoiser_train(data, s, cfg)
        for k in a.params:
            assert np.array_equal(a.params[k], b.params[k])

    yield "training bit-identical", train_deterministic
    net = TinyDenoiser.init(2, 8, s.T, make_rng(1))
    yield "zero cotangent vjp", lambda: close(denoiser_vjp(net, data[:3], 5, np.zeros((3, 2))), 0.0)

    def identity_net():
        p = {
            "W1": np.eye(3), "b1": np.zeros(3), "E": np.zeros((3, N_TIME_FEATURES)), "C": np.zeros((3, 0)),
            "W2": np.eye(3), "b2": np.zeros(3), "W3": np.eye(3), "b3": np.zeros(3),
        }  # fmt: skip
        idn = TinyDenoiser(p, 10, activation="linear")
        cot = np.array([0.3, -1.0, 2.0])
        close(idn.predict(cot, 4), cot)
        close(denoiser_vjp(idn, np.ones(3), 4, cot), cot)

    yield "identity network vjp", identity_net


def _sampler_checks():
    yield "latent determinism", lambda: close(
        sample_latent(2, 5, make_rng(3)).pack(), sample_latent(2, 5, make_rng(3)).pack(), 0
    )
    m = _Affine(0.5, sigma=0.1)
    yield "single-step unrolling", lambda: close(generate(m, LatentCode([2.0], [[1.0]])), [1.1])
    s = linear_schedule(1e-4, 0.02, 20)
    det = gm_mean_estimator(_sym_gm(), s, "ddim", 0.0)

    def eps_ignored():
        z = sample_latent(1, 20, make_rng(4))
        z2 = LatentCode(z.x_T, z.eps + 10.0)
        close(generate(det, z), generate(det, z2), 0)

    yield "eta=0 ignores eps", eps_ignored
    x_T = np.array([[0.4], [-1.3]])
    yield "T_g=1 is one-step x0", lambda: close(generate_deterministic(det, x_T, T_g=1), det.x0(x_T, s.T), 1e-12)
    yield "deterministic repeatable", lambda: close(generate_deterministic(det, x_T, 5), generate_deterministic(det, x_T, 5), 0)

    def zero_cot():
        z = sample_latent(1, 20, make_rng(5))
        _, g = generate_with_grad(det, z, None, np.zeros(1))
        close(g.pack(), 0.0)

    yield "zero cotangent gradient", zero_cot

    def zero_sigma_grad():
        z = sample_latent(1, 20, make_rng(6))
        _, g = generate_with_grad(det, z, None, np.ones(1))
        close(g.eps, 0.0)

    yield "sigma=0 eps gradient", zero_sigma_grad


def _encoder_checks():
    s = linear_schedule(1e-4, 0.02, 10)

    def ddim0_deterministic():
        x0 = np.array([0.5, -1.0])
        tr = posterior_sample(s, x0, ("ddim", 0.0), make_rng(1))
        for t in range(2, s.T + 1):
            a_t, a_prev = s.alpha_bar(t), s.alpha_bar(t - 1)
            eps = (tr.x[t] - np.sqrt(a_t) * x0) / np.sqrt(1 - a_t)
            close(tr.x[t - 1], np.sqrt(a_prev) * x0 + np.sqrt(1 - a_prev) * eps, 1e-12)

    yield "ddim eta=0 posterior deterministic", ddim0_deterministic
    s1 = NoiseSchedule([0.3])

    def one_step():
        tr = posterior_sample(s1, np.zeros(20000), "ddpm", make_rng(3))
        assert len(tr.x) == 2
        close(np.std(tr.x[1]), np.sqrt(0.3), 0.03)

    yield "T=1 trajectory", one_step

    def one_step_recon():
        m = gm_mean_estimator(_sym_gm(), s1, "ddpm-opt1")
        x0 = np.array([0.37])
        z = dpm_encode(m, x0, make_rng(4))
        close(generate(m, z), x0, 1e-12)

    yield "T=1 exact reconstruction", one_step_recon


def _translation_checks():
    s = linear_schedule(1e-4, 0.02, 40)
    gm = _sym_gm(labels=[0, 1])
    m = gm_mean_estimator(gm, s, "ddim", 0.5)
    x0 = np.array([[-2.1], [0.4]])
    yield "identity translation", lambda: close(cycle_translate(m, m, x0, 40, make_rng(1)).output, x0, 1e-9)
    yield "T_es=0 identity", lambda: close(cycle_translate(m, m, x0, 0, make_rng(1), 0, 1).output, x0, 0)
    yield "T_sd=0 identity", lambda: close(sdedit_refine(m, x0, 0, make_rng(1)), x0, 0)
    single = GaussianMixture([1.0], [[0.5]], [[0.3]])
    det = gm_mean_estimator(single, s, "ddim", 0.0)
    yield "ddib affine round trip", lambda: close(ddib_translate(det, det, x0), x0, 1e-6)
    yield "affine lipschitz", lambda: close(estimate_lipschitz(_Affine(-0.7, 3.0), 1), 0.7, 1e-10)
    yield "identity lipschitz", lambda: close(estimate_lipschitz(_Affine(1.0), 1), 1.0, 1e-12)
    yield "equal conditions gap", lambda: close(estimate_condition_gap(m, 10, 0, 0), 0.0)
    yield "shifted estimators gap", lambda: close(
        estimate_condition_gap(_Affine(0.3, 0.0), 1, None, None, m_b=_Affine(0.3, 0.25)), 0.25, 1e-12
    )
    yield "bound recursion", lambda: close(propagate_bound([1, 1], [0.1, 0.1]).B, [0.0, 0.1, 0.3])
    yield "telescoping bound", lambda: close(propagate_bound(np.zeros(7), np.full(7, 0.2)).B[-1], 1.4)
    yield "zero-gap bound", lambda: close(propagate_bound(np.full(5, 0.9), np.zeros(5)).B, 0.0)


def _guidance_checks():
    gen = IdentityGenerator(1)
    q = gd.QuadraticEnergy(0.0)
    yield "lambda=0 accepts all", lambda: close(
        gd.rejection_oracle(gen, q, 0.0, make_rng(1), 100, batch=100, return_stats=True)[1]["acceptance_rate"], 1.0
    )

    def truncated():
        z = gd.rejection_oracle(gen, gd.IndicatorEnergy(-0.5, 0.5), 1.0, make_rng(2), 200)
        assert np.all(np.abs(z) <= 0.5)

    yield "indicator truncates prior", truncated
    emb = gd.LinearMap.identity(2)
    ref = np.array([1.0, 0.0])
    yield "cosine aligned", lambda: close(gd.embedding_cosine_energy(emb, ref).value(np.array([2.0, 0.0])), 0.0)
    yield "cosine orthogonal", lambda: close(gd.embedding_cosine_energy(emb, ref).value(np.array([0.0, 3.0])), 1.0)
    yield "cosine antipodal", lambda: close(gd.embedding_cosine_energy(emb, ref).value(np.array([-1.0, 0.0])), 2.0)

    def aug_identity():
        x = np.array([0.3, -0.8])
        one = gd.augmented_cosine_energy(emb, ref, [gd.LinearMap.identity(2)])
        close(one.value(x), gd.embedding_cosine_energy(emb, ref).value(x))
        aug = gd.random_affine_augmentations(2, 1, make_rng(3))[0]
        close(gd.augmented_cosine_energy(emb, ref, [aug] * 4).value(x), gd.augmented_cosine_energy(emb, ref, [aug]).value(x))

    yield "augmentation reductions", aug_identity
    clf = gd.LinearSoftmaxClassifier.binary(np.array([1.0]), 0.0)
    yield "classifier p=1/2", lambda: close(gd.classifier_energy(clf, 1).value(np.array([0.0])), np.log(2.0))
    yield "classifier p=1", lambda: close(gd.classifier_energy(clf, 1).value(np.array([1e4])), 0.0)
    yield "classifier clamp", lambda: close(gd.classifier_energy(clf, 1).value(np.array([-1e4])), gd.E_MAX)

    def sphere():
        n = gd.optimize_edit_direction(
            IdentityGenerator(2), gd.classifier_energy(gd.LinearSoftmaxClassifier.binary(np.ones(2)), 1),
            emb, 0.7, 1.0, make_rng(8).standard_normal((3, 2)), steps=5,
        )  # fmt: skip
        close(np.linalg.norm(n), 0.7)

    yield "edit direction on sphere", sphere


def _metrics_checks():
    rng = make_rng(7)
    img = rng.random((9, 9))
    yield "psnr 20 dB", lambda: close(mt.psnr(np.zeros(100), np.full(100, 0.1)), 20.0, 1e-12)
    yield "psnr cap", lambda: close(mt.psnr(img, img), mt.PSNR_CAP)
    yield "ssim identical", lambda: close(mt.ssim(img, img), 1.0)
    yield "ssim constant", lambda: close(mt.ssim(np.full((8, 8), 0.3), np.full((8, 8), 0.3)), 1.0)
    X = rng.standard_normal((20, 2))
    yield "mmd2 X=Y", lambda: close(mt.mmd2(X, X), 0.0)
    yield "sliced X=Y", lambda: close(mt.sliced_w1(X, X, 16, make_rng(1)), 0.0)
    yield "sliced 1D pair", lambda: close(mt.sliced_w1([0.0], [1.0], 8, make_rng(1)), 1.0)


def _data_checks():
    def symmetric():
        gm, _ = make_gaussian_mixture_domain(
            DomainSpec(weights=[0.5, 0.5], means=[-2.0, 2.0], variances=[0.25, 0.25])
        )
        close(gm.weights, [0.5, 0.5])

    yield "symmetric spec echo", symmetric

    def single_affine():
        gm, _ = make_gaussian_mixture_domain(DomainSpec(weights=[1.0], means=[1.0], variances=[0.5]))
        m = gm_mean_estimator(gm, linear_schedule(1e-4, 0.02, 10), "ddpm-opt2")
        xs = np.array([[-3.0], [0.0], [3.0]])
        mu = m.mean(xs, 5)
        close(mu[2] - mu[1], mu[1] - mu[0], 1e-12)

    yield "single component affine", single_affine

    def zero_jitter():
        a, _ = make_toy_image_domains(DomainSpec(kind="toy-images", position_jitter=0.0))
        imgs = a.sample(5)
        assert all(np.array_equal(imgs[0], im) for im in imgs)

    yield "zero jitter identical", zero_jitter

    def pixel_range():
        sp = DomainSpec(kind="toy-images", peak=255.0, background_range=(0.0, 0.4), foreground_range=(0.6, 1.0))
        for dom in make_toy_image_domains(sp):
            im = dom.sample(50)
            assert im.min() >= 0 and im.max() <= 255.0

    yield "pixels within peak", pixel_range


_GROUPS = {
    "schedule": _schedule_checks,
    "models": _models_checks,
    "sampler": _sampler_checks,
    "encoder": _encoder_checks,
    "translation": _translation_checks,
    "guidance": _guidance_checks,
    "metrics": _metrics_checks,
    "data": _data_checks,
}


def collect_checks():
    """All checks as ``(module, name, fn)`` triples in a fixed order."""
    return [(mod, name, fn) for mod in MODULES for name, fn in _GROUPS[mod]()]


def selftest(extra_checks=(), out=print):
    """Run the smoke suite; returns ``(ok, summary)``.

    ``summary`` maps module -> {"passed", "total", "failures"}.  Checks passed
    via ``extra_checks`` are ``(module, name, fn)`` triples appended to the
    suite (used to confirm that a broken invariant is reported).
    """
    summary = {}
    for mod, name, fn in collect_checks() + list(extra_checks):
        entry = summary.setdefault(mod, {"passed": 0, "total": 0, "failures": []})
        entry["total"] += 1
        try:
            fn()
        except Exception as exc:  # noqa: BLE001 -- every failure is reported, not raised
            origin = getattr(exc, "module", mod)
            entry["failures"].append(f"{name}: {type(exc).__name__} [{origin}] {exc}")
        else:
            entry["passed"] += 1
    ok = all(not e["failures"] for e in summary.values())
    if out is not None:
        for mod, e in summary.items():
            out(f"{mod:12s} {e['passed']}/{e['total']} passed")
            for f in e["failures"]:
                out(f"  FAIL [{mod}] {f}")
        out("selftest: " + ("PASS" if ok else "FAIL"))
    return ok, summary
