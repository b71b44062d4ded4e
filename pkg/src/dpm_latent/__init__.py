"""Diffusion samplers as deterministic maps of a Gaussian latent code.

The package covers noise schedules, mean estimators (exact Gaussian-mixture
denoisers, a tiny trainable noise predictor, a score adapter), latent-code
samplers with reverse-mode gradients, the reconstructable encoder,
two-domain translation with its distance bound, Langevin guidance in latent
space, image/distribution metrics, synthetic domains and an experiment CLI.
"""

from .encoder import Trajectory, dpm_encode, posterior_sample, residuals
from .errors import (
    ConfigError,
    DivergenceError,
    DPMError,
    InvalidProbabilityError,
    NonConvergenceError,
    NumericalError,
    ScheduleError,
    ScheduleMismatchError,
    StarvationError,
    ZeroSigmaError,
)
from .rng import make_rng
from .sampler import (
    DeterministicGenerator,
    IdentityGenerator,
    LatentCode,
    SamplerConfig,
    StochasticGenerator,
    generate,
    generate_deterministic,
    generate_deterministic_with_grad,
    generate_with_grad,
    sample_latent,
)
from .schedule import NoiseSchedule, ddim_sigma, forward_marginal, linear_schedule
from .translation import (
    BoundProfile,
    TranslationResult,
    cycle_translate,
    ddib_translate,
    estimate_condition_gap,
    estimate_lipschitz,
    probe_region,
    propagate_bound,
    sdedit_refine,
)

__version__ = "0.1.0"
