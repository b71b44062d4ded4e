import json

import numpy as np
import pytest

from conftest import check_gradient
from dpm_latent import (
    DeterministicGenerator,
    IdentityGenerator,
    StochasticGenerator,
    linear_schedule,
    make_rng,
)
from dpm_latent.errors import ConfigError, DivergenceError, InvalidProbabilityError, NumericalError, StarvationError
from dpm_latent.guidance import (
    E_MAX,
    GuidanceConfig,
    IndicatorEnergy,
    LinearMap,
    LinearSoftmaxClassifier,
    QuadraticEnergy,
    RandomFeatureMap,
    augmented_cosine_energy,
    classifier_energy,
    edit_objective,
    embedding_cosine_energy,
    guidance_report,
    langevin_guide,
    optimize_edit_direction,
    random_affine_augmentations,
    rejection_oracle,
    write_guidance_report,
)
from dpm_latent.metrics import mmd2, random_directions
from dpm_latent.models import GaussianMixture, gm_mean_estimator

BENCH_GM = GaussianMixture([0.5, 0.5], [[-1.0], [1.0]], [[0.3], [0.3]])
BENCH_SCHED = linear_schedule(0.05, 0.5, 5)


def _generators():
    return {
        "identity": IdentityGenerator(1),
        "stochastic": StochasticGenerator(gm_mean_estimator(BENCH_GM, BENCH_SCHED, "ddpm-opt1"), 1),
        "deterministic": DeterministicGenerator(gm_mean_estimator(BENCH_GM, BENCH_SCHED, "ddim", 0.0), 1),
    }


# -- identity-generator closed forms -------------------------------------------


@pytest.mark.parametrize(
    "lam,center,stat,band",
    [(1.0, 0.0, "var", (0.45, 0.55)), (0.0, 0.0, "var", (0.95, 1.05)), (1.0, 2.0, "mean", (0.95, 1.05))],
)
def test_identity_langevin_moments(lam, center, stat, band):
    cfg = GuidanceConfig(lam=lam, n_steps=500, step_size=0.05, n_chains=10_000, seed=1)
    z = langevin_guide(IdentityGenerator(1), QuadraticEnergy(center), cfg)
    value = z.var() if stat == "var" else z.mean()
    assert band[0] <= value <= band[1]


def test_keep_and_thin_shapes():
    cfg = GuidanceConfig(n_steps=10, n_chains=7, keep=4, thin=3)
    out = langevin_guide(IdentityGenerator(2), QuadraticEnergy(), cfg)
    assert out.shape == (4, 7, 2)


def test_divergence_guard():
    cfg = GuidanceConfig(lam=0.0, n_steps=5, n_chains=64, guard_radius=3.0)
    with pytest.raises(DivergenceError) as info:
        langevin_guide(IdentityGenerator(50), QuadraticEnergy(), cfg)
    assert info.value.module == "guidance"


def test_config_validation():
    with pytest.raises(ConfigError):
        GuidanceConfig(lam=-1.0)
    with pytest.raises(ConfigError):
        GuidanceConfig(step_size=0.0)


# -- rejection oracle --------------------------------------------------------------


def test_rejection_lambda_zero_accepts_all():
    z, stats = rejection_oracle(IdentityGenerator(2), QuadraticEnergy(), 0.0, make_rng(0), 5000, return_stats=True)
    assert stats["acceptance_rate"] == 1.0
    assert abs(z.mean()) < 0.05 and abs(z.var() - 1) < 0.05


def test_rejection_indicator_truncates():
    z = rejection_oracle(IdentityGenerator(1), IndicatorEnergy(-0.5, 1.0), 1.0, make_rng(1), 3000)
    assert z.min() >= -0.5 and z.max() <= 1.0


def test_rejection_starvation():
    with pytest.raises(StarvationError):
        rejection_oracle(IdentityGenerator(1), IndicatorEnergy(8.0, 8.1), 1.0, make_rng(2), 10, batch=100_000, max_proposals=2_000_000)


def test_rejection_matches_closed_form():
    z = rejection_oracle(IdentityGenerator(1), QuadraticEnergy(2.0), 1.0, make_rng(3), 20_000)
    assert abs(z.mean() - 1.0) < 0.02 and abs(z.var() - 0.5) < 0.02


@pytest.mark.parametrize("name", ["identity", "stochastic", "deterministic"])
def test_langevin_agrees_with_rejection(name):
    gen = _generators()[name]
    E = QuadraticEnergy(1.0)
    cfg = GuidanceConfig(lam=1.0, n_steps=500, step_size=0.05, n_chains=1000, seed=4)
    x_l = gen(langevin_guide(gen, E, cfg))
    x_r = gen(rejection_oracle(gen, E, 1.0, make_rng(5), 1000))
    assert mmd2(x_l, x_r, bandwidth=1.0) < 0.01


def test_stochastic_and_deterministic_latents_agree():
    g = _generators()
    E = QuadraticEnergy(1.0)
    cfg = GuidanceConfig(lam=1.0, n_steps=500, step_size=0.05, n_chains=1000)
    xs = g["stochastic"](langevin_guide(g["stochastic"], E, cfg, make_rng(6)))
    xd = g["deterministic"](langevin_guide(g["deterministic"], E, cfg, make_rng(7)))
    assert mmd2(xs, xd, bandwidth=1.0) < 0.02


def test_monotone_in_lambda():
    gen = _generators()["stochastic"]
    E = QuadraticEnergy(2.0)
    means = []
    for lam in (0.0, 1.0, 10.0):
        cfg = GuidanceConfig(lam=lam, n_steps=300, step_size=0.02, n_chains=1000, seed=8)
        means.append(E.value(gen(langevin_guide(gen, E, cfg))).mean())
    assert means[0] > means[1] > means[2]


# -- energies ----------------------------------------------------------------------


def test_cosine_energy_examples():
    emb = LinearMap.identity(3)
    E = embedding_cosine_energy(emb, np.array([1.0, 0.0, 0.0]))
    assert E.value(np.array([2.0, 0.0, 0.0])) == pytest.approx(0.0, abs=1e-15)
    assert E.value(np.array([0.0, 3.0, 0.0])) == pytest.approx(1.0, abs=1e-15)
    assert E.value(np.array([-0.5, 0.0, 0.0])) == pytest.approx(2.0, abs=1e-15)
    with pytest.raises(NumericalError):
        E.value(np.zeros(3))
    with pytest.raises(NumericalError):
        embedding_cosine_energy(emb, np.zeros(3))


def test_augmented_cosine_reductions():
    rng = make_rng(9)
    emb = RandomFeatureMap(4, 6, seed=1)
    ref = rng.standard_normal(4)
    target = emb(ref)
    x = rng.standard_normal((10, 4))
    single = augmented_cosine_energy(emb, target, [LinearMap.identity(4)])
    np.testing.assert_allclose(single.value(x), embedding_cosine_energy(emb, ref).value(x), rtol=1e-15)
    aug = random_affine_augmentations(4, 1, rng)[0]
    np.testing.assert_allclose(
        augmented_cosine_energy(emb, target, [aug] * 5).value(x),
        augmented_cosine_energy(emb, target, [aug]).value(x),
        rtol=1e-14,
    )
    with pytest.raises(ConfigError):
        augmented_cosine_energy(emb, target, [])


class _BadClassifier:
    def log_probs(self, x):
        return np.log(np.full(np.shape(x)[:-1] + (2,), 0.7))


def test_classifier_energy_examples():
    x = np.zeros(2)
    sure = classifier_energy(LinearSoftmaxClassifier.binary([1.0, 0.0], 60.0), 1)
    assert sure.value(x) == pytest.approx(0.0, abs=1e-15)
    half = classifier_energy(LinearSoftmaxClassifier.binary([1.0, 0.0], 0.0), 1)
    assert half.value(x) == pytest.approx(np.log(2), abs=1e-15)
    never = classifier_energy(LinearSoftmaxClassifier.binary([1.0, 0.0], -1000.0), 1)
    assert never.value(x) == E_MAX
    np.testing.assert_array_equal(never.grad(x), 0.0)
    with pytest.raises(InvalidProbabilityError):
        classifier_energy(_BadClassifier(), 0).value(x)


def _energies(d, rng):
    emb = RandomFeatureMap(d, 5, seed=2)
    return {
        "quadratic": QuadraticEnergy(rng.standard_normal(d)),
        "embedding_cosine": embedding_cosine_energy(emb, rng.standard_normal(d)),
        "augmented_cosine": augmented_cosine_energy(emb, rng.standard_normal(5), random_affine_augmentations(d, 4, rng)),
        "classifier": classifier_energy(LinearSoftmaxClassifier(rng.standard_normal((3, d)), rng.standard_normal(3)), 2),
    }


@pytest.mark.parametrize("name", ["quadratic", "embedding_cosine", "augmented_cosine", "classifier"])
def test_energy_gradients(name):
    rng = make_rng(10)
    E = _energies(3, rng)[name]
    for _ in range(3):
        check_gradient(E.value, E.grad, rng.standard_normal(3), rng, n_probes=20)


@pytest.mark.parametrize("name", ["stochastic", "deterministic"])
def test_latent_log_density_gradient(name):
    gen = _generators()[name]
    E = QuadraticEnergy(0.7)
    lam = 2.0
    f = lambda z: float(-0.5 * z @ z - lam * E.value(gen(z[None]))[0])  # noqa: E731

    def grad(z):
        x, pull = gen.vjp(z[None])
        return (-z[None] - lam * pull(E.grad(x)))[0]

    rng = make_rng(12)
    check_gradient(f, grad, rng.standard_normal(gen.dim), rng)


# -- edit direction ----------------------------------------------------------------


@pytest.fixture
def edit_setup():
    d = 6
    w = make_rng(3).standard_normal(d)
    cls = classifier_energy(LinearSoftmaxClassifier.binary(w, -0.5), 1)
    return IdentityGenerator(d), cls, LinearMap.identity(d), w, make_rng(4).standard_normal((64, d))


def test_edit_direction_norm(edit_setup):
    gen, cls, emb, _, bz = edit_setup
    for r in (0.1, 1.5, 7.0):
        n = optimize_edit_direction(gen, cls, emb, r, 1.0, bz, steps=7, lr=0.3, rng=1)
        assert np.linalg.norm(n) == pytest.approx(r, abs=1e-12)
    with pytest.raises(ConfigError):
        optimize_edit_direction(gen, cls, emb, 0.0, 1.0, bz)


def test_edit_lambda_zero_beats_random(edit_setup):
    gen, cls, emb, _, bz = edit_setup
    n = optimize_edit_direction(gen, cls, emb, 1.5, 0.0, bz, steps=500, lr=0.5, rng=5)
    best, _ = edit_objective(gen, cls, emb, n, bz, 0.0)
    rng = make_rng(6)
    randoms = [edit_objective(gen, cls, emb, 1.5 * v, bz, 0.0)[0] for v in random_directions(6, 100, rng)]
    assert best <= min(randoms)


def test_edit_logistic_optimum(edit_setup):
    gen, cls, emb, w, bz = edit_setup
    n = optimize_edit_direction(gen, cls, emb, 1.5, 100.0, bz, steps=500, lr=0.05, rng=5)
    optimum = cls.value(bz + 1.5 * w / np.linalg.norm(w)).mean()
    assert cls.value(bz + n).mean() == pytest.approx(optimum, rel=0.01)


@pytest.mark.parametrize("name", ["identity", "stochastic"])
def test_edit_objective_gradient(name):
    gen = _generators()[name] if name != "identity" else IdentityGenerator(3)
    d = gen.dim
    rng = make_rng(13)
    data_dim = 1 if name != "identity" else 3
    emb = RandomFeatureMap(data_dim, 4, seed=3)
    cls = classifier_energy(LinearSoftmaxClassifier(rng.standard_normal((2, data_dim))), 0)
    bz = rng.standard_normal((5, d))
    f = lambda n: edit_objective(gen, cls, emb, n, bz, 0.7)[0]  # noqa: E731
    g = lambda n: edit_objective(gen, cls, emb, n, bz, 0.7)[1]  # noqa: E731
    check_gradient(f, g, 0.3 * rng.standard_normal(d), rng)


def test_guidance_report(tmp_path):
    cfg = GuidanceConfig(lam=2.0, n_steps=3, n_chains=4)
    E = QuadraticEnergy()
    z = langevin_guide(IdentityGenerator(1), E, cfg)
    write_guidance_report(tmp_path / "g.json", cfg, E.value(z), {"acceptance_rate": 0.5})
    rep = json.loads((tmp_path / "g.json").read_text())
    assert rep["config"]["lam"] == 2.0 and len(rep["final_energy"]) == 4
    assert rep["summary"]["mean_energy"] == pytest.approx(float(E.value(z).mean()))
    assert guidance_report(cfg, [1.0])["acceptance"] is None
