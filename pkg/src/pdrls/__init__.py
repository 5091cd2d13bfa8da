"""Partial-diffusion recursive least squares over networks with noisy links."""
from .errors import ConfigError, DomainError, ResourceError, ValidationFailure
from .experiment import ExperimentConfig, compare_theory_sim, monte_carlo, resolve, run_single
from .network_model import (
    CombinationMatrix,
    Topology,
    build_uniform_combination,
    enumerate_links,
    generate_random_topology,
)
from .theory import build_theory, stability_checks, steady_state_msd, transient_msd

__all__ = [
    "CombinationMatrix",
    "ConfigError",
    "DomainError",
    "ExperimentConfig",
    "ResourceError",
    "Topology",
    "ValidationFailure",
    "build_theory",
    "build_uniform_combination",
    "compare_theory_sim",
    "enumerate_links",
    "generate_random_topology",
    "monte_carlo",
    "resolve",
    "run_single",
    "stability_checks",
    "steady_state_msd",
    "transient_msd",
]
