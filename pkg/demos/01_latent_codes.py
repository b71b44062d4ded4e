"""Diffusion samplers as deterministic maps of a Gaussian latent code.

A stochastic sampler with T steps consumes x_T and one noise vector per step.
Collecting all of them into z = (x_T, eps_T, ..., eps_1) turns sampling into a
deterministic function x_0 = G(z).  This demo builds an exactly solvable
model (a Gaussian mixture with its closed-form denoiser), draws samples both
ways and checks them against the target distribution.
"""

import numpy as np
from scipy import stats

from dpm_latent import LatentCode, generate, generate_deterministic, linear_schedule, make_rng, sample_latent
from dpm_latent.models import GaussianMixture, gm_mean_estimator


def main():
    # 1. A schedule.  With 100 steps we rescale the usual 1000-step betas so
    #    that alpha_bar_T is close to zero and x_T really is N(0, I).
    s = linear_schedule(1e-3, 0.2, 100)
    print(f"T = {s.T}, alpha_bar_T = {s.alpha_bar(s.T):.2e}")

    # 2. Data: a single Gaussian N(0.5, 0.8), so the exact denoiser is affine.
    gm = GaussianMixture([1.0], [[0.5]], [[0.8]])
    target = stats.norm(0.5, np.sqrt(0.8)).cdf

    # 3. Stochastic path: z has d * (T + 1) coordinates.
    m = gm_mean_estimator(gm, s, "ddpm-opt1")
    z = sample_latent(1, s.T, make_rng(0), batch=10_000)
    print(f"latent dimension per sample: {z.dim}")
    x = generate(m, z)
    print(f"stochastic path    KS = {stats.kstest(x[:, 0], target).statistic:.4f}")

    # 4. The same z always gives the same sample: G is a plain function.
    assert np.array_equal(generate(m, z[:5]), generate(m, z[:5]))

    # 5. Deterministic path (DDIM with eta = 0): only x_T is random.
    m_det = gm_mean_estimator(gm, s, "ddim", 0.0)
    x_det = generate_deterministic(m_det, make_rng(1).standard_normal((10_000, 1)))
    print(f"deterministic path KS = {stats.kstest(x_det[:, 0], target).statistic:.4f}")

    # 6. A coarser ladder of 10 steps trades accuracy for speed.
    x_coarse = generate_deterministic(m_det, make_rng(1).standard_normal((10_000, 1)), T_g=10)
    print(f"10-step ladder     KS = {stats.kstest(x_coarse[:, 0], target).statistic:.4f}")

    # 7. Latent codes serialize to a small binary format.
    blob = z[0].to_bytes()
    assert np.array_equal(LatentCode.from_bytes(blob).pack(), z[0].pack())
    print(f"one latent code = {len(blob)} bytes")


if __name__ == "__main__":
    main()
