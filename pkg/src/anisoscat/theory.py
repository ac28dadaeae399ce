"""Closed-form diffusion-limit predictions for anisotropic scattering."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularKernel
from .phase_function import ScatteringKernel, mean_cosine, normalize

WAVENUMBER = 0.5 * math.pi  # of the sin(pi x / 2) perturbation on [-2, 2]
BACKGROUND = 10.0
AMPLITUDE = 5.0


@dataclass(frozen=True)
class DiffusionPrediction:
    g_bar: float
    D: float
    lambda_tr: float
    lambda_s: float
    c: float = 1.0

    @property
    def decay_rate(self) -> float:
        """Decay rate D (pi/2)^2 of the sine mode."""
        return self.D * WAVENUMBER**2


def _check(sigma: float, g_bar: float):
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if g_bar >= 1.0:
        raise SingularKernel(f"mean cosine {g_bar!r} >= 1 has no diffusion limit")


def diffusion_coefficient(c: float, sigma: float, g_bar: float) -> float:
    """D = c / (3 (1 - g_bar) sigma)."""
    _check(sigma, g_bar)
    return c / (3.0 * (1.0 - g_bar) * sigma)


def transport_mfp(sigma: float, g_bar: float) -> float:
    """Transport mean free path (1/sigma) / (1 - g_bar)."""
    _check(sigma, g_bar)
    return (1.0 / sigma) / (1.0 - g_bar)


def amplitude(x, t: float, D: float):
    """Diffusion solution for rho - 10: 5 sin(pi x/2) exp(-D (pi/2)^2 t)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    out = AMPLITUDE * np.sin(WAVENUMBER * np.asarray(x, dtype=float)) * math.exp(-D * WAVENUMBER**2 * t)
    return float(out) if out.ndim == 0 else out


def double_factorial(n: int) -> int:
    """n!! with (-1)!! = 0!! = 1."""
    if n < -1:
        raise ValueError("double factorial undefined below -1")
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def sphere_monomial_moment(r: int, s: int, t: int) -> float:
    """Integral of mu^r xi^s zeta^t over the unit sphere."""
    if min(r, s, t) < 0:
        raise ValueError("exponents must be non-negative")
    if r % 2 or s % 2 or t % 2:
        return 0.0
    num = double_factorial(r - 1) * double_factorial(s - 1) * double_factorial(t - 1)
    return 4.0 * math.pi * num / double_factorial(r + s + t + 1)


def predict(kernel: ScatteringKernel, sigma: float, c: float = 1.0) -> DiffusionPrediction:
    kernel = normalize(kernel)
    g_bar = mean_cosine(kernel)
    lambda_tr = transport_mfp(sigma, g_bar)
    return DiffusionPrediction(g_bar=g_bar, D=c * lambda_tr / 3.0, lambda_tr=lambda_tr, lambda_s=1.0 / sigma, c=c)
