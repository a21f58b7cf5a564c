"""Forward Picard solver for FBSDEs with jumps."""

from ._core import (
    ConfigError,
    Error,
    NumericalError,
    SimulationError,
    UnsupportedError,
    __version__,
    bs_put,
    default_config,
    example2_u_ref,
    example2_wm_exact,
    experiment_tags,
    merton_u_ref_1d,
    merton_wm,
    normal_cdf,
    normalize_config,
    run_experiment,
    simulate_example2,
)

__all__ = [
    "ConfigError",
    "Error",
    "NumericalError",
    "SimulationError",
    "UnsupportedError",
    "__version__",
    "bs_put",
    "default_config",
    "example2_u_ref",
    "example2_wm_exact",
    "experiment_tags",
    "merton_u_ref_1d",
    "merton_wm",
    "normal_cdf",
    "normalize_config",
    "run_experiment",
    "simulate_example2",
]
