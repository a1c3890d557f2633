"""Direct sampling, random-walk Metropolis and Metropolis-coupled MCMC on
patchy and unimodal Gaussian landscapes, with Levy-exponent, spectral-slope
and mode-coverage analyses."""

from .analysis import (
    FitError,
    autocorrelation,
    fit_power_law,
    fit_spectral_slope,
    flight_distances,
    kl_mode_divergence,
    periodogram,
)
from .config import ConfigError, ExperimentConfig, make_config
from .distributions import (
    GaussianMixture,
    UnimodalGaussian,
    generate_patchy_environment,
    log_density,
    mean_mode_distance,
    nearest_mode,
    sample_direct,
    tempered_log_density,
)
from .experiments import ResultSet, run_experiment, summarize
from .samplers import (
    NEIGHBORS_ONLY,
    RANDOM_PAIRS,
    ProposalSpec,
    TemperatureLadder,
    Trace,
    initial_point,
    levy_proposal,
    run_ds,
    run_mc3,
    run_rwm,
    rwm_step,
    swap_acceptance,
)

__version__ = "0.1.0"
