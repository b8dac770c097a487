"""Numerical laboratory for expected level-set measures of random fields."""

from .engine import (
    euler_char_expectation,
    kacrice_rhs,
    level_density,
    microlens_rhs,
    second_factorial_moment_rhs,
    shotnoise_rhs,
    weighted_kacrice_rhs,
)
from .errors import (
    CapabilityError,
    ConfigurationError,
    DegeneracyError,
    DomainError,
    ModelError,
    RicelabError,
    SingularityError,
)
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    emit_plot_data,
    run_experiment,
    run_suite,
    verdict,
)
from .modelspec import model_from_doc, model_from_json, model_to_doc, model_to_json

__version__ = "0.1.0"

__all__ = [
    "CapabilityError",
    "ConfigurationError",
    "DegeneracyError",
    "DomainError",
    "ExperimentConfig",
    "ExperimentReport",
    "ModelError",
    "RicelabError",
    "SingularityError",
    "emit_plot_data",
    "euler_char_expectation",
    "kacrice_rhs",
    "level_density",
    "microlens_rhs",
    "model_from_doc",
    "model_from_json",
    "model_to_doc",
    "model_to_json",
    "run_experiment",
    "run_suite",
    "second_factorial_moment_rhs",
    "shotnoise_rhs",
    "verdict",
    "weighted_kacrice_rhs",
]
