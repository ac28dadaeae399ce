"""Polynomial scattering phase functions.

A kernel is an azimuthally integrated density ``p(mu)`` on ``mu = cos(theta)``
in [-1, 1], stored either as Legendre coefficients ``C_l`` or as monomial
coefficients ``C_l*`` of ``sum C_l* mu**l``. Isotropic scattering is
``p = 1/2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from numpy.polynomial import legendre as _leg

from .errors import DomainError, NegativeDensity, NonPositiveNormalization

MAX_ORDER = 32
POSITIVITY_TOL = 1e-12


class Basis(enum.Enum):
    LEGENDRE = "legendre"
    MONOMIAL = "monomial"


@dataclass(frozen=True)
class ScatteringKernel:
    basis: Basis
    coefficients: tuple[float, ...]
    normalized: bool = False

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        if not coeffs:
            raise ValueError("kernel needs at least one coefficient")
        if len(coeffs) - 1 > MAX_ORDER:
            raise ValueError(f"kernel order {len(coeffs) - 1} exceeds maximum {MAX_ORDER}")
        if not all(math.isfinite(c) for c in coeffs):
            raise ValueError("kernel coefficients must be finite")
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "basis", Basis(self.basis))

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    @classmethod
    def legendre(cls, coefficients) -> ScatteringKernel:
        return cls(Basis.LEGENDRE, tuple(coefficients))

    @classmethod
    def monomial(cls, coefficients) -> ScatteringKernel:
        return cls(Basis.MONOMIAL, tuple(coefficients))

    def monomial_coefficients(self) -> np.ndarray:
        return np.asarray(to_monomial(self).coefficients, dtype=float)

    def __str__(self) -> str:
        coeffs = ",".join(repr(c) for c in self.coefficients)
        return f"basis={self.basis.value}; coeffs={coeffs}"


def to_monomial(kernel: ScatteringKernel) -> ScatteringKernel:
    """Rewrite ``sum C_l P_l(mu)`` as ``sum C_l* mu**l``."""
    if kernel.basis is Basis.MONOMIAL:
        return kernel
    mono = _leg.leg2poly(np.asarray(kernel.coefficients, dtype=float))
    # leg2poly trims trailing zeros; keep the declared order
    mono = np.pad(mono, (0, len(kernel.coefficients) - len(mono)))
    return ScatteringKernel(Basis.MONOMIAL, tuple(mono), kernel.normalized)


def _monomial_moment(coeffs, k: int) -> float:
    return math.fsum(c * 2.0 / (l + k + 1) for l, c in enumerate(coeffs) if (l + k) % 2 == 0)


def normalization_integral(kernel: ScatteringKernel) -> float:
    """Exact value of the integral of ``p`` over [-1, 1]."""
    if kernel.basis is Basis.LEGENDRE:
        # only P_0 has a nonzero integral
        return 2.0 * kernel.coefficients[0]
    return _monomial_moment(kernel.coefficients, 0)


def normalize(kernel: ScatteringKernel) -> ScatteringKernel:
    """Scale coefficients so the kernel integrates to one. Idempotent."""
    if kernel.normalized:
        return kernel
    total = normalization_integral(kernel)
    if not total > 0.0:
        raise NonPositiveNormalization(f"normalization integral is {total!r}; must be positive")
    return replace(kernel, coefficients=tuple(c / total for c in kernel.coefficients), normalized=True)


def _horner(coeffs, mu):
    out = np.zeros_like(mu) if isinstance(mu, np.ndarray) else 0.0
    for c in reversed(coeffs):
        out = out * mu + c
    return out


def evaluate(kernel: ScatteringKernel, mu):
    """p(mu) for scalar or array ``mu`` in [-1, 1]."""
    arr = np.asarray(mu, dtype=float)
    if np.any(np.abs(arr) > 1.0):
        raise DomainError(f"mu must lie in [-1, 1], got {mu!r}")
    coeffs = to_monomial(kernel).coefficients
    if arr.ndim == 0:
        return float(_horner(coeffs, float(arr)))
    return _horner(coeffs, arr)


def _require_normalized(kernel: ScatteringKernel):
    if not kernel.normalized:
        raise ValueError("kernel must be normalized first")


def polynomial_moment(kernel: ScatteringKernel, k: int) -> float:
    """Integral of ``mu**k p(mu)`` over [-1, 1], exact up to rounding."""
    _require_normalized(kernel)
    if k < 0:
        raise ValueError("moment order must be non-negative")
    return _monomial_moment(to_monomial(kernel).coefficients, k)


def mean_cosine(kernel: ScatteringKernel) -> float:
    """Average scattering cosine ``g_bar`` of a normalized kernel."""
    return polynomial_moment(kernel, 1)


def validate_positivity(kernel: ScatteringKernel, grid_points: int = 10_001) -> None:
    """Raise NegativeDensity if ``p`` dips below -1e-12 on a uniform grid."""
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    mu = np.linspace(-1.0, 1.0, grid_points)
    values = evaluate(kernel, mu)
    i = int(np.argmin(values))
    if values[i] < -POSITIVITY_TOL:
        raise NegativeDensity(float(mu[i]), float(values[i]))


def _parse_number(text: str) -> float:
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        return float(text)


def parse_kernel(text: str) -> ScatteringKernel:
    """Parse ``basis=legendre|monomial; coeffs=c0,c1,...`` (fractions allowed)."""
    fields = {}
    for part in "".join(text.split()).lower().split(";"):
        if not part:
            continue
        key, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"malformed kernel field {part!r}")
        fields[key] = value
    if set(fields) != {"basis", "coeffs"}:
        raise ValueError(f"kernel spec needs exactly 'basis' and 'coeffs', got {sorted(fields)}")
    try:
        basis = Basis(fields["basis"])
    except ValueError:
        raise ValueError(f"unknown basis {fields['basis']!r}") from None
    try:
        coeffs = [_parse_number(c) for c in fields["coeffs"].split(",")]
    except ValueError:
        raise ValueError(f"bad coefficient list {fields['coeffs']!r}") from None
    return ScatteringKernel(basis, tuple(coeffs))


def _symmetric(order: int) -> ScatteringKernel:
    coeffs = [0.0] * order + [(order + 1) / 2.0]
    return ScatteringKernel.monomial(coeffs)


def _forward(order: int, sign: float = 1.0) -> ScatteringKernel:
    c = 1.0 / (order + 1)
    return ScatteringKernel.legendre([c if l % 2 == 0 else sign * c for l in range(order + 1)])


# Symmetric (S), forward (F) and backward (B) kernels, as tabulated (unnormalized).
PRESETS: dict[str, ScatteringKernel] = {
    "isotropic": ScatteringKernel.monomial([0.5]),
    "S2": _symmetric(2),
    "S4": _symmetric(4),
    "S6": _symmetric(6),
    "F1": _forward(1),
    "F3": _forward(3),
    "F5": _forward(5),
    "F7": _forward(7),
    "B1": _forward(1, -1.0),
    "B3": _forward(3, -1.0),
    "B5": _forward(5, -1.0),
    "B7": _forward(7, -1.0),
}

_PRESET_LOOKUP = {name.lower(): name for name in PRESETS}


def preset(name: str) -> ScatteringKernel:
    """Look up a tabulated kernel by symbol (case-insensitive)."""
    try:
        return PRESETS[_PRESET_LOOKUP[name.strip().lower()]]
    except KeyError:
        raise KeyError(f"unknown kernel preset {name!r}; choose from {', '.join(PRESETS)}") from None


def resolve_kernel(spec: str | ScatteringKernel) -> ScatteringKernel:
    """Preset name, inline spec or kernel -> normalized, positivity-checked kernel."""
    if isinstance(spec, ScatteringKernel):
        kernel = spec
    elif "=" in spec:
        kernel = parse_kernel(spec)
    else:
        kernel = preset(spec)
    kernel = normalize(kernel)
    validate_positivity(kernel)
    return kernel
