import numpy as np
import pytest

from dpm_latent import (
    ScheduleMismatchError,
    ZeroSigmaError,
    cycle_translate,
    ddib_translate,
    dpm_encode,
    estimate_condition_gap,
    estimate_lipschitz,
    generate,
    linear_schedule,
    make_rng,
    probe_region,
    propagate_bound,
    sdedit_refine,
)
from dpm_latent.errors import ConfigError
from dpm_latent.models import GaussianMixture, gm_mean_estimator
from dpm_latent.schedule import NoiseSchedule

V = 0.25  # per-domain variance of the symmetric benchmark


def _x0_hat(x, abar, m, v):
    """Closed-form E[x_0 | x_t] for a single Gaussian N(m, v)."""
    return (np.sqrt(abar) * v * x + (1 - abar) * m) / (abar * v + 1 - abar)


def _ddpm_affine(s, t, m, v):
    """(slope, intercept) of the DDPM posterior mean for data N(m, v)."""
    a_t, a_prev, beta = s.alpha_bar(t), s.alpha_bar(t - 1), s.beta(t)
    c0 = np.sqrt(a_prev) * beta / (1 - a_t)
    cx = np.sqrt(s.alpha(t)) * (1 - a_prev) / (1 - a_t)
    den = a_t * v + 1 - a_t
    return c0 * np.sqrt(a_t) * v / den + cx, c0 * (1 - a_t) * m / den


def _ddim0_affine(s, t, m, v):
    """(slope, intercept) of the deterministic DDIM step for data N(m, v)."""
    a_t, a_prev = s.alpha_bar(t), s.alpha_bar(t - 1)
    den = a_t * v + 1 - a_t
    p, q = np.sqrt(a_t) * v / den, (1 - a_t) * m / den  # x0_hat = p x + q
    r = np.sqrt((1 - a_prev) / (1 - a_t))  # weight on eps_hat = (x - sqrt(a_t) x0_hat) / sqrt(1 - a_t)
    slope = np.sqrt(a_prev) * p + r * (1 - np.sqrt(a_t) * p)
    return slope, np.sqrt(a_prev) * q - r * np.sqrt(a_t) * q


@pytest.fixture
def two_label():
    return GaussianMixture([0.5, 0.5], [[-2.0], [2.0]], [[V], [V]], labels=[0, 1])


@pytest.mark.parametrize("kind,eta", [("ddpm-opt1", 0.0), ("ddpm-opt2", 0.0), ("ddim", 0.1), ("ddim", 1.0)])
@pytest.mark.parametrize("frac", [0.25, 0.5, 1.0])
def test_identity_translation(gm2d, kind, eta, frac):
    m = gm_mean_estimator(gm2d, linear_schedule(1e-4, 0.02, 40), kind, eta)
    x0 = make_rng(5).standard_normal((50, 2))
    res = cycle_translate(m, m, x0, int(40 * frac), make_rng(6))
    assert np.max(np.abs(res.output - x0)) <= 1e-9
    assert np.all(res.distances[0] == 0)


def test_identity_is_generate_after_encode(gm2d):
    m = gm_mean_estimator(gm2d, linear_schedule(1e-4, 0.02, 20), "ddpm-opt2")
    x0 = np.array([[0.2, 0.4]])
    res = cycle_translate(m, m, x0, 20, make_rng(3))
    z = dpm_encode(m, x0, make_rng(3))
    np.testing.assert_array_equal(res.output, generate(m, z))


def test_t_es_zero_is_identity(two_label, sched100):
    m = gm_mean_estimator(two_label, sched100, "ddpm-opt1")
    x0 = np.array([[-2.3], [-1.1]])
    res = cycle_translate(m, m, x0, 0, make_rng(0), cond_src=0, cond_tgt=1)
    np.testing.assert_array_equal(res.output, x0)


def _composed_cycle_oracle(s, x0, T_es):
    """x_hat_0 - x_0 obeys d_{t-1} = A_t d_t + (c_tgt - c_src) with d_{T_es} = 0."""
    d = 0.0
    for t in range(T_es, 0, -1):
        A, c_src = _ddpm_affine(s, t, -2.0, V)
        _, c_tgt = _ddpm_affine(s, t, 2.0, V)
        d = A * d + (c_tgt - c_src)
    return x0 + d


def test_symmetric_domains_mean(two_label, sched100):
    m = gm_mean_estimator(two_label, sched100, "ddpm-opt1")
    x0 = np.full((2000, 1), -2.0)
    out = cycle_translate(m, m, x0, 100, make_rng(11), cond_src=0, cond_tgt=1).output[:, 0]
    oracle = _composed_cycle_oracle(sched100, -2.0, 100)
    se = out.std() / np.sqrt(out.size)
    assert abs(out.mean() - oracle) <= 3 * se + 1e-9
    # the affine map lands on +2 up to the prior mismatch sqrt(abar_T)
    assert oracle == pytest.approx(2.0, abs=0.05)


def test_schedule_mismatch(two_label):
    m1 = gm_mean_estimator(two_label, linear_schedule(1e-4, 0.02, 10))
    m2 = gm_mean_estimator(two_label, linear_schedule(1e-4, 0.03, 10))
    with pytest.raises(ScheduleMismatchError):
        cycle_translate(m1, m2, np.zeros(1), 5, make_rng(0))
    with pytest.raises(ConfigError):
        cycle_translate(m1, m1, np.zeros(1), 11, make_rng(0))


def test_zero_sigma_propagates(two_label):
    m = gm_mean_estimator(two_label, linear_schedule(1e-4, 0.02, 10), "ddim", 0.0)
    with pytest.raises(ZeroSigmaError):
        cycle_translate(m, m, np.zeros(1), 5, make_rng(0))


def test_t_es_monotone(two_label, sched100):
    m = gm_mean_estimator(two_label, sched100, "ddpm-opt1")
    x0 = np.full((2000, 1), -2.0) + 0.5 * make_rng(1).standard_normal((2000, 1))
    errs = [
        np.mean(np.abs(cycle_translate(m, m, x0, T_es, make_rng(2), cond_src=0, cond_tgt=1).output - x0))
        for T_es in (0, 10, 25, 50, 100)
    ]
    assert all(a <= b for a, b in zip(errs, errs[1:]))


def test_sdedit_examples(sched100):
    gm = GaussianMixture([1.0], [[0.0]], [[1.0]])
    m = gm_mean_estimator(gm, sched100, "ddpm-opt1")
    x = make_rng(3).standard_normal((10_000, 1))
    np.testing.assert_array_equal(sdedit_refine(m, x, 0, make_rng(0)), x)
    out = sdedit_refine(m, x, 100, make_rng(4))
    assert abs(np.corrcoef(x[:, 0], out[:, 0])[0, 1]) < 0.05
    dists = [np.mean(np.abs(sdedit_refine(m, x, k, make_rng(5)) - x)) for k in (0, 25, 50, 100)]
    assert all(a <= b for a, b in zip(dists, dists[1:]))
    with pytest.raises(ConfigError):
        sdedit_refine(m, x, 101, make_rng(0))


def test_ddib_affine_round_trip():
    gm = GaussianMixture([1.0], [[0.7]], [[0.4]])
    m = gm_mean_estimator(gm, linear_schedule(1e-4, 0.02, 100), "ddim", 0.0)
    x0 = make_rng(6).standard_normal((20, 1)) * 2
    assert np.max(np.abs(ddib_translate(m, m, x0) - x0)) < 1e-6
    assert np.max(np.abs(ddib_translate(m, m, x0, T_g=10) - x0)) < 1e-6


def test_ddib_symmetric_domains(two_label, sched100):
    m = gm_mean_estimator(two_label, sched100, "ddim", 0.0)
    x = -2.0
    for t in range(1, 101):
        slope, icpt = _ddim0_affine(sched100, t, -2.0, V)
        x = (x - icpt) / slope
    for t in range(100, 0, -1):
        slope, icpt = _ddim0_affine(sched100, t, 2.0, V)
        x = slope * x + icpt
    out = ddib_translate(m, m, np.array([[-2.0]]), cond_src=0, cond_tgt=1)
    assert out[0, 0] == pytest.approx(x, abs=1e-6)
    assert x == pytest.approx(2.0, abs=0.05)


def test_ddib_single_step_swaps_x0_predictions(two_label, sched100):
    m = gm_mean_estimator(two_label, sched100, "ddim", 0.0)
    a_T = sched100.alpha_bar(100)
    x0 = np.array([[-1.5]])
    # invert the source x0-prediction, then apply the target's
    den = a_T * V + 1 - a_T
    x_T = (x0 - (1 - a_T) * -2.0 / den) / (np.sqrt(a_T) * V / den)
    expect = _x0_hat(x_T, a_T, 2.0, V)
    np.testing.assert_allclose(ddib_translate(m, m, x0, T_g=1, cond_src=0, cond_tgt=1), expect, rtol=1e-8)


def test_ddib_needs_deterministic(two_label):
    m = gm_mean_estimator(two_label, linear_schedule(1e-4, 0.02, 10), "ddpm-opt1")
    with pytest.raises(ConfigError):
        ddib_translate(m, m, np.zeros((1, 1)))


class _Affine:
    def __init__(self, a, b, schedule):
        self.a, self.b, self.schedule = a, b, schedule

    @property
    def T(self):
        return self.schedule.T

    def mean(self, x, t, cond=None):
        return self.a * np.asarray(x) + self.b


def test_lipschitz_examples(two_label, sched100):
    s = linear_schedule(1e-4, 0.02, 10)
    assert estimate_lipschitz(_Affine(-0.37, 1.2, s), 3) == pytest.approx(0.37, abs=1e-10)
    assert estimate_lipschitz(_Affine(1.0, 0.0, s), 3) == pytest.approx(1.0, abs=1e-12)
    m = gm_mean_estimator(two_label, sched100, "ddpm-opt1")
    for t in (1, 30, 100):
        A, _ = _ddpm_affine(sched100, t, -2.0, V)
        est = estimate_lipschitz(m, t, cond=0, perturbation=1e-3, rng=make_rng(t))
        assert est == pytest.approx(A, abs=1e-8)


def test_condition_gap_examples(two_label, sched100):
    s = linear_schedule(1e-4, 0.02, 10)
    m = gm_mean_estimator(two_label, sched100, "ddpm-opt1")
    assert estimate_condition_gap(m, 50, 1, 1) == 0.0
    delta = 0.6
    gap = estimate_condition_gap(_Affine(0.5, 0.0, s), 2, None, None, m_b=_Affine(0.5, delta, s))
    assert gap == pytest.approx(delta, abs=1e-15)
    _, c0 = _ddpm_affine(sched100, 50, -2.0, V)
    _, c1 = _ddpm_affine(sched100, 50, 2.0, V)
    assert estimate_condition_gap(m, 50, 0, 1) == pytest.approx(c1 - c0, rel=1e-10)


def test_condition_gap_matches_grid_oracle():
    gm = GaussianMixture([0.2, 0.3, 0.35, 0.15], [[-2.0], [0.5], [-0.5], [2.5]], [[0.2], [0.3], [0.1], [0.4]], labels=[0, 0, 1, 1])
    s = linear_schedule(1e-3, 0.2, 50)
    m = gm_mean_estimator(gm, s, "ddpm-opt1")
    for t in (3, 10, 25):
        lo, hi = probe_region(gm, s, t)
        grid = np.linspace(lo[0], hi[0], 20001)[:, None]
        oracle = np.max(np.abs(m.mean(grid, t, 0) - m.mean(grid, t, 1)))
        est = estimate_condition_gap(m, t, 0, 1, region=(lo, hi), n_probes=512, rng=make_rng(t))
        assert est <= oracle * (1 + 1e-12)
        assert est >= 0.98 * oracle


def test_propagate_bound_examples():
    prof = propagate_bound([1, 1], [0.1, 0.1])
    np.testing.assert_allclose(prof.B, [0.0, 0.1, 0.3])
    prof = propagate_bound(np.zeros(7), np.full(7, 0.25))
    assert prof.B[-1] == pytest.approx(7 * 0.25)
    assert propagate_bound(np.full(5, 2.0), np.zeros(5)).B[-1] == 0.0
    with pytest.raises(ConfigError):
        propagate_bound([1, -1], [0, 0])
    with pytest.raises(ConfigError):
        propagate_bound([1, 1], [0, 0], measured=np.zeros(2))


def test_propagate_bound_flags_violation():
    prof = propagate_bound([0.0, 0.0], [0.1, 0.1], measured=[0.0, 0.05, 0.3])
    assert not prof.sound
    assert prof.violations[0]["step"] == 0


def _analytic_KS(s, T_es):
    K, S = [], []
    for t in range(T_es, 0, -1):
        A, c0 = _ddpm_affine(s, t, -2.0, V)
        _, c1 = _ddpm_affine(s, t, 2.0, V)
        K.append(A)
        S.append(abs(c1 - c0))
    return np.array(K), np.array(S)


def test_bound_sound_on_affine_models(two_label, sched100):
    m = gm_mean_estimator(two_label, sched100, "ddpm-opt2")
    for T_es in (25, 100):
        x0 = -2.0 + 0.5 * make_rng(T_es).standard_normal((100, 1))
        res = cycle_translate(m, m, x0, T_es, make_rng(9), cond_src=0, cond_tgt=1)
        K, S = _analytic_KS(sched100, T_es)
        prof = propagate_bound(K, S, res.distances)
        assert prof.sound, prof.violations[:3]
        assert np.all(res.distances[-1] <= prof.B[-1])


def test_bound_with_estimated_constants(two_label, sched100):
    m = gm_mean_estimator(two_label, sched100, "ddpm-opt1")
    T_es = 40
    K = [estimate_lipschitz(m, t, 0, region=probe_region(two_label, sched100, t), rng=make_rng(t)) for t in range(T_es, 0, -1)]
    S = [estimate_condition_gap(m, t, 0, 1, region=probe_region(two_label, sched100, t), rng=make_rng(t)) for t in range(T_es, 0, -1)]
    res = cycle_translate(m, m, np.full((100, 1), -2.0), T_es, make_rng(3), cond_src=0, cond_tgt=1)
    assert propagate_bound(K, S, res.distances).sound


def test_exports(tmp_path, two_label):
    import json

    m = gm_mean_estimator(two_label, linear_schedule(1e-4, 0.02, 6), "ddpm-opt1")
    res = cycle_translate(m, m, np.array([[-2.0]]), 6, make_rng(0), cond_src=0, cond_tgt=1, seed=0)
    res.to_json(tmp_path / "r.json")
    res.to_csv(tmp_path / "r.csv")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["T_es"] == 6 and len(d["distances"]) == 7
    assert (tmp_path / "r.csv").read_text().splitlines()[1].startswith("6,0.0")
    prof = propagate_bound(*_analytic_KS(m.schedule, 6), res.distances)
    prof.to_json(tmp_path / "b.json")
    prof.to_csv(tmp_path / "b.csv")
    assert json.loads((tmp_path / "b.json").read_text())["B"][0] == 0.0
    assert len((tmp_path / "b.csv").read_text().splitlines()) == 8


def test_one_step_schedule_translation():
    gm = GaussianMixture([0.5, 0.5], [[-1.0], [1.0]], [[0.5], [0.5]], labels=[0, 1])
    m = gm_mean_estimator(gm, NoiseSchedule([0.5]), "ddpm-opt1")
    res = cycle_translate(m, m, np.zeros((1, 1)), 1, make_rng(0), cond_src=0, cond_tgt=1)
    _, c0 = _ddpm_affine(m.schedule, 1, -1.0, 0.5)
    _, c1 = _ddpm_affine(m.schedule, 1, 1.0, 0.5)
    assert res.output[0, 0] == pytest.approx(c1 - c0, abs=1e-12)
