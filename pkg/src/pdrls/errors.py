"""Exception types shared across the package.

Each class carries the process exit code the CLI maps it to.
"""
from __future__ import annotations


class PdrlsError(Exception):
    exit_code = 1


class ConfigError(PdrlsError, ValueError):
    """Invalid configuration or parameters."""

    exit_code = 2


class DomainError(PdrlsError, ValueError):
    """A quantity requested outside the domain where it is defined."""

    exit_code = 3


class ResourceError(DomainError):
    """Problem size exceeds the enforced memory bound."""


class ValidationFailure(PdrlsError):
    exit_code = 4
