"""Multiple-try Metropolis samplers, an exact discrete-state oracle, and a
sensor-localization benchmark harness."""

__version__ = "0.1.0"

from .densities import GaussianProposal, MixtureProposal, TargetDensity, gaussian_log_density, gaussian_target
from .errors import ChainError, ConfigurationError, EnumerationSizeError, InvariantViolation, MTMError, UsageError
from .samplers import ChainTrace, IterationRecord, SamplerConfig, imtm_step, run_chain, rw_mtm_step, variable_n_step
from .weights import WeightSpec, normalize_and_select, normalizing_constant_estimate

__all__ = [
    "ChainError",
    "ChainTrace",
    "ConfigurationError",
    "EnumerationSizeError",
    "GaussianProposal",
    "InvariantViolation",
    "IterationRecord",
    "MTMError",
    "MixtureProposal",
    "SamplerConfig",
    "TargetDensity",
    "UsageError",
    "WeightSpec",
    "gaussian_log_density",
    "gaussian_target",
    "imtm_step",
    "normalize_and_select",
    "normalizing_constant_estimate",
    "run_chain",
    "rw_mtm_step",
    "variable_n_step",
]
