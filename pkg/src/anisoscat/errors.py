"""Exception types raised across the package."""

from __future__ import annotations


class AnisoscatError(Exception):
    """Base class for all package errors."""


class NonPositiveNormalization(AnisoscatError, ValueError):
    """The phase-function integral over [-1, 1] is zero or negative."""


class DomainError(AnisoscatError, ValueError):
    """A scattering cosine outside [-1, 1] was requested."""


class NegativeDensity(AnisoscatError, ValueError):
    """The phase function goes negative somewhere on [-1, 1]."""

    def __init__(self, mu: float, value: float):
        self.mu = mu
        self.value = value
        super().__init__(f"phase function is negative at mu={mu:.6g}: p(mu)={value:.6g}")


class ConvergenceFailure(AnisoscatError, RuntimeError):
    """CDF inversion did not converge; the kernel CDF is not monotone."""


class SingularKernel(AnisoscatError, ValueError):
    """Mean scattering cosine >= 1: no diffusion limit exists."""


class InsufficientData(AnisoscatError, ValueError):
    """Too few usable samples for a decay fit."""


class ConfigError(AnisoscatError, ValueError):
    """Invalid experiment configuration."""
