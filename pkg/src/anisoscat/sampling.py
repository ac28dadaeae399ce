"""Scattering-cosine sampling and direction rotation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from numpy.polynomial import legendre as _leg

from .errors import ConvergenceFailure
from .phase_function import Basis, ScatteringKernel, normalize
from .streams import RandomStream, uniform_block

CDF_TOL = 1e-12
MAX_BISECTIONS = 60
POLE_EPS = 1e-10
TABLE_SIZE = 1024
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Direction:
    x: float
    y: float
    z: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


def cdf_coefficients(kernel: ScatteringKernel) -> np.ndarray:
    """Monomial coefficients of F(mu), the antiderivative of p with F(-1) = 0."""
    mono = kernel.monomial_coefficients()
    out = np.zeros(mono.size + 1)
    for l, c in enumerate(mono):
        out[l + 1] = c / (l + 1)
        out[0] -= c * (-1.0) ** (l + 1) / (l + 1)
    return out


def cdf_legendre(kernel: ScatteringKernel) -> np.ndarray:
    """The same F(mu) in the Legendre basis.

    High-order kernels have large, cancelling monomial coefficients; the
    Legendre form keeps rounding near machine precision on [-1, 1].
    """
    if kernel.basis is Basis.LEGENDRE:
        coeffs = np.asarray(kernel.coefficients, dtype=float)
    else:
        coeffs = _leg.poly2leg(np.asarray(kernel.coefficients, dtype=float))
    out = np.zeros(len(kernel.coefficients) + 1)
    integ = _leg.legint(coeffs, lbnd=-1.0)
    out[: integ.size] = integ
    return out


def cdf_representation(kernel: ScatteringKernel) -> tuple[np.ndarray, bool]:
    """CDF coefficients and whether they are Legendre.

    Monomial Horner is cheaper and is kept whenever its rounding bound
    stays a decade below the inversion tolerance.
    """
    mono = cdf_coefficients(kernel)
    bound = 2 * mono.size * np.finfo(float).eps * float(np.abs(mono).sum())
    if bound <= 0.1 * CDF_TOL:
        return mono, False
    return cdf_legendre(kernel), True


@nb.njit(nogil=True, cache=True, inline="always")
def _cdf_eval(coeffs, legendre, x):
    if not legendre:
        acc = 0.0
        for j in range(coeffs.size - 1, -1, -1):
            acc = acc * x + coeffs[j]
        return acc
    # sum coeffs[j] P_j(x) by the three-term recurrence
    acc = coeffs[0]
    if coeffs.size == 1:
        return acc
    p0 = 1.0
    p1 = x
    acc += coeffs[1] * x
    for k in range(1, coeffs.size - 1):
        # same operation order as the batched loop, so both round identically
        p2 = (2 * k + 1) / (k + 1) * x * p1 - k / (k + 1) * p0
        acc += coeffs[k + 1] * p2
        p0 = p1
        p1 = p2
    return acc


@nb.njit(nogil=True, cache=True)
def _bisect(fcoef, legendre, u, lo, hi):
    # returns (mu, converged)
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        f = _cdf_eval(fcoef, legendre, mid) - u
        if abs(f) <= CDF_TOL:
            return mid, True
        if f < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), False


@nb.njit(nogil=True, cache=True)
def _bracket_table(fcoef, legendre, size):
    # lower[j] <= F^-1(j/size) <= upper[j], both endpoints by plain bisection
    lower = np.empty(size + 1)
    upper = np.empty(size + 1)
    lower[0] = -1.0
    upper[0] = -1.0
    lower[size] = 1.0
    upper[size] = 1.0
    for j in range(1, size):
        target = j / size
        lo = -1.0
        hi = 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            if _cdf_eval(fcoef, legendre, mid) < target:
                lo = mid
            else:
                hi = mid
        lower[j] = lo
        upper[j] = hi
    return lower, upper


@nb.njit(nogil=True, cache=True, inline="always")
def invert_cdf(fcoef, legendre, lower, upper, u):
    """Solve F(mu) = u by bisection inside the tabulated bracket around u."""
    size = lower.size - 1
    j = int(u * size)
    if j >= size:
        j = size - 1
    return _bisect(fcoef, legendre, u, lower[j], upper[j + 1])


@nb.njit(nogil=True, cache=True, inline="always")
def rotate(a, b, c, cos_theta, phi):
    """Turn unit vector (a, b, c) by polar angle acos(cos_theta), azimuth phi.

    The azimuth is measured in the right-handed frame (e1, e2, d) where e1 is
    the component of +z orthogonal to d, or of +x when d is within 1e-10 of a pole.
    """
    s = math.sqrt(max(0.0, 1.0 - cos_theta * cos_theta))
    cp = math.cos(phi)
    sp = math.sin(phi)
    if abs(c) > 1.0 - POLE_EPS:
        r = math.sqrt(1.0 - a * a)
        e1x, e1y, e1z = r, -a * b / r, -a * c / r
        e2x, e2y, e2z = 0.0, c / r, -b / r
    else:
        r = math.sqrt(a * a + b * b)
        e1x, e1y, e1z = -c * a / r, -c * b / r, r
        e2x, e2y, e2z = b / r, -a / r, 0.0
    x = cos_theta * a + s * (cp * e1x + sp * e2x)
    y = cos_theta * b + s * (cp * e1y + sp * e2y)
    z = cos_theta * c + s * (cp * e1z + sp * e2z)
    inv = 1.0 / math.sqrt(x * x + y * y + z * z)
    return x * inv, y * inv, z * inv


@nb.njit(nogil=True, cache=True, inline="always")
def isotropic_from_uniforms(u1, u2):
    z = 2.0 * u1 - 1.0
    s = math.sqrt(max(0.0, 1.0 - z * z))
    phi = TWO_PI * u2
    return s * math.cos(phi), s * math.sin(phi), z


class CosineSampler:
    """Inverse-CDF sampler for one normalized kernel.

    Holds the CDF polynomial and a bracketing table so transport code can
    pass plain arrays into compiled loops.
    """

    def __init__(self, kernel: ScatteringKernel, table_size: int = TABLE_SIZE):
        self.kernel = normalize(kernel)
        self.fcoef, self.legendre = cdf_representation(self.kernel)
        self.lower, self.upper = _bracket_table(self.fcoef, self.legendre, table_size)

    def from_uniform(self, u: float) -> float:
        mu, ok = invert_cdf(self.fcoef, self.legendre, self.lower, self.upper, float(u))
        if not ok:
            raise ConvergenceFailure(f"CDF inversion failed for u={u!r}; is the kernel a valid density?")
        return mu

    def sample_many(self, seed: int, stream_id: int, n: int) -> np.ndarray:
        """``n`` cosines from one stream, one counter block per cosine."""
        out = np.empty(n)
        if not _sample_many(self.fcoef, self.legendre, self.lower, self.upper, np.uint64(seed), np.uint64(stream_id), out):
            raise ConvergenceFailure("CDF inversion failed; is the kernel a valid density?")
        return out


@nb.njit(nogil=True, cache=True)
def _sample_many(fcoef, legendre, lower, upper, seed, stream_id, out):
    for i in range(out.size):
        u, _, _, _ = uniform_block(seed, stream_id, 2, i)
        mu, ok = invert_cdf(fcoef, legendre, lower, upper, u)
        if not ok:
            return False
        out[i] = mu
    return True


_SAMPLERS: dict[ScatteringKernel, CosineSampler] = {}


def sampler_for(kernel: ScatteringKernel) -> CosineSampler:
    kernel = normalize(kernel)
    if kernel not in _SAMPLERS:
        _SAMPLERS[kernel] = CosineSampler(kernel)
    return _SAMPLERS[kernel]


def cosine_from_uniform(kernel: ScatteringKernel, u: float) -> float:
    return sampler_for(kernel).from_uniform(u)


def sample_cosine(kernel: ScatteringKernel, stream: RandomStream) -> float:
    """Draw a scattering cosine with density p(mu); consumes one uniform."""
    return cosine_from_uniform(kernel, stream.uniform())


def azimuth_from_uniform(u: float) -> float:
    return TWO_PI * u


def sample_azimuth(stream: RandomStream) -> float:
    return azimuth_from_uniform(stream.uniform())


def rotate_direction(incoming: Direction, cos_theta: float, phi: float) -> Direction:
    if abs(cos_theta) > 1.0:
        raise ValueError(f"cos_theta must lie in [-1, 1], got {cos_theta!r}")
    return Direction(*rotate(incoming.x, incoming.y, incoming.z, float(cos_theta), float(phi)))


def isotropic_direction(u1: float, u2: float) -> Direction:
    return Direction(*isotropic_from_uniforms(float(u1), float(u2)))


def sample_isotropic(stream: RandomStream) -> Direction:
    u1 = stream.uniform()
    u2 = stream.uniform()
    return isotropic_direction(u1, u2)


@nb.njit(nogil=True, cache=True)
def _isotropic_many(seed, stream_id, out):
    for i in range(out.shape[0]):
        u1, u2, _, _ = uniform_block(seed, stream_id, 2, i)
        out[i, 0], out[i, 1], out[i, 2] = isotropic_from_uniforms(u1, u2)


def sample_isotropic_many(seed: int, stream_id: int, n: int) -> np.ndarray:
    """(n, 3) array of isotropic unit vectors, one counter block each."""
    out = np.empty((n, 3))
    _isotropic_many(np.uint64(seed), np.uint64(stream_id), out)
    return out


@nb.njit(nogil=True, cache=True)
def _scatter_many(fcoef, legendre, lower, upper, seed, stream_id, dirs, out):
    for i in range(dirs.shape[0]):
        u1, u2, _, _ = uniform_block(seed, stream_id, 3, i)
        mu, ok = invert_cdf(fcoef, legendre, lower, upper, u1)
        if not ok:
            return False
        out[i, 0], out[i, 1], out[i, 2] = rotate(dirs[i, 0], dirs[i, 1], dirs[i, 2], mu, TWO_PI * u2)
    return True


def scatter_many(kernel: ScatteringKernel, dirs: np.ndarray, seed: int, stream_id: int) -> np.ndarray:
    """Scatter each row of ``dirs`` once with ``kernel``."""
    s = sampler_for(kernel)
    dirs = np.ascontiguousarray(dirs, dtype=float)
    out = np.empty_like(dirs)
    if not _scatter_many(s.fcoef, s.legendre, s.lower, s.upper, np.uint64(seed), np.uint64(stream_id), dirs, out):
        raise ConvergenceFailure("CDF inversion failed; is the kernel a valid density?")
    return out


_BATCH = 256


@nb.njit(nogil=True, cache=True)
def invert_cdf_batch(fcoef, legendre, lower, upper, u, out, m):
    """Vectorized ``invert_cdf`` over ``u[:m]``; identical results lane by lane.

    A converged lane collapses its bracket onto the accepted midpoint, so later
    sweeps leave it unchanged. Returns False if any lane fails to converge.
    """
    size = lower.size - 1
    deg = fcoef.size - 1
    uu = np.empty(_BATCH)
    lo = np.empty(_BATCH)
    hi = np.empty(_BATCH)
    mid = np.empty(_BATCH)
    acc = np.empty(_BATCH)
    p0 = np.empty(_BATCH)
    p1 = np.empty(_BATCH)
    for start in range(0, m, _BATCH):
        n = min(_BATCH, m - start)
        for j in range(n):
            uu[j] = u[start + j]
            k = int(uu[j] * size)
            if k >= size:
                k = size - 1
            lo[j] = lower[k]
            hi[j] = upper[k + 1]
        left = n
        for _ in range(MAX_BISECTIONS):
            if legendre:
                for j in range(n):
                    x = 0.5 * (lo[j] + hi[j])
                    mid[j] = x
                    p0[j] = 1.0
                    p1[j] = x
                    acc[j] = fcoef[0] + fcoef[1] * x
                for k in range(1, deg):
                    a = (2 * k + 1) / (k + 1)
                    b = k / (k + 1)
                    ck = fcoef[k + 1]
                    for j in range(n):
                        p2 = a * mid[j] * p1[j] - b * p0[j]
                        acc[j] += ck * p2
                        p0[j] = p1[j]
                        p1[j] = p2
            else:
                for j in range(n):
                    mid[j] = 0.5 * (lo[j] + hi[j])
                    acc[j] = fcoef[deg]
                for d in range(deg - 1, -1, -1):
                    cd = fcoef[d]
                    for j in range(n):
                        acc[j] = acc[j] * mid[j] + cd
            left = 0
            for j in range(n):
                f = acc[j] - uu[j]
                x = mid[j]
                lo[j] = x if f < 0.0 else lo[j]
                hi[j] = hi[j] if f < 0.0 else x
                if abs(f) <= CDF_TOL:
                    lo[j] = x
                    hi[j] = x
                else:
                    left += 1
            if left == 0:
                break
        if left > 0:
            return False
        for j in range(n):
            out[start + j] = lo[j]
    return True
