"""Analog Monte Carlo transport in a periodic 1D slab with pure scattering.

Particles carry full 3D directions; only the x direction cosine moves them.
The slab is [-2, 2) with periodic ends. Histories are advanced census to
census in fixed-size chunks; every chunk is processed the same way whatever
the number of workers, so tallies are bitwise reproducible.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .phase_function import ScatteringKernel, normalize, validate_positivity
from .sampling import Direction, invert_cdf_batch, isotropic_from_uniforms, rotate, sampler_for
from .streams import TAG_SOURCE, TAG_TRANSPORT, RandomStream, uniform_block

X_MIN = -2.0
X_MAX = 2.0
LENGTH = X_MAX - X_MIN
TOTAL_WEIGHT = 40.0  # integral of the initial density over the slab
CHUNK = 1 << 15
THREADS_ENV = "ANISOSCAT_THREADS"


def initial_density(x):
    return 10.0 + 5.0 * np.sin(0.5 * np.pi * np.asarray(x))


@dataclass(frozen=True)
class SimulationConfig:
    kernel: ScatteringKernel
    sigma: float
    c: float = 1.0
    n_particles: int = 1_000_000
    n_cells: int = 200
    t_end: float = 1.0
    census_dt: float = 0.25
    seed: int = 1

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.n_cells < 2:
            raise ValueError("n_cells must be >= 2")
        if not self.census_dt > 0:
            raise ValueError("census_dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def particle_weight(self) -> float:
        return TOTAL_WEIGHT / self.n_particles

    def census_times(self) -> list[float]:
        """0, dt, 2 dt, ... up to and including t_end."""
        n = math.ceil(self.t_end / self.census_dt - 1e-9)
        return [min(k * self.census_dt, self.t_end) for k in range(n + 1)]


@dataclass
class Particle:
    x: float
    dir: Direction
    weight: float
    t: float = 0.0


@dataclass
class TallyGrid:
    """Census tallies on a uniform mesh over [-2, 2].

    All particles share one weight, so cell populations are kept as integer
    counts; the weight sum per cell is ``counts * particle_weight`` and the
    grid total is exactly ``n_particles * particle_weight`` at every census.
    """

    n_cells: int
    particle_weight: float
    counts: np.ndarray = None
    mu_sum: np.ndarray = None
    mu2_sum: np.ndarray = None
    domain: tuple[float, float] = field(default=(X_MIN, X_MAX))

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros(self.n_cells, dtype=np.int64)
        if self.mu_sum is None:
            self.mu_sum = np.zeros(self.n_cells)
        if self.mu2_sum is None:
            self.mu2_sum = np.zeros(self.n_cells)

    @property
    def dx(self) -> float:
        return LENGTH / self.n_cells

    @property
    def cell_centers(self) -> np.ndarray:
        return X_MIN + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def weight_sum(self) -> np.ndarray:
        return self.counts * self.particle_weight

    @property
    def weight_mu_sum(self) -> np.ndarray:
        return self.mu_sum * self.particle_weight

    @property
    def weight_mu2_sum(self) -> np.ndarray:
        return self.mu2_sum * self.particle_weight

    @property
    def rho(self) -> np.ndarray:
        return self.weight_sum / self.dx

    @property
    def jx(self) -> np.ndarray:
        return self.weight_mu_sum / self.dx

    @property
    def jxx(self) -> np.ndarray:
        return self.weight_mu2_sum / self.dx

    def total_weight(self) -> float:
        return int(self.counts.sum()) * self.particle_weight

    def cell_index(self, x: float) -> int:
        return min(int((x - X_MIN) / self.dx), self.n_cells - 1)


@nb.njit(nogil=True, cache=True, inline="always")
def _wrap(x):
    if x >= X_MAX:
        y = x - LENGTH
    elif x < X_MIN:
        y = x + LENGTH
    else:
        return x
    if y < X_MIN or y >= X_MAX:
        y = (x - X_MIN) % LENGTH + X_MIN
    if y >= X_MAX:
        y -= LENGTH
    return y


def apply_periodic(x: float) -> float:
    """Map ``x`` into [-2, 2)."""
    return float(_wrap(float(x)))


@nb.njit(nogil=True, cache=True)
def _source_chunk(seed, first_id, x, ux, uy, uz):
    # rejection sampling against the constant envelope 15, one counter block per attempt
    for i in range(x.size):
        sid = first_id + i
        block = 0
        while True:
            u0, u1, u2, u3 = uniform_block(seed, sid, TAG_SOURCE, block)
            block += 1
            xi = X_MIN + LENGTH * u0
            if 15.0 * u1 < 10.0 + 5.0 * math.sin(0.5 * math.pi * xi):
                break
        x[i] = xi
        ux[i], uy[i], uz[i] = isotropic_from_uniforms(u2, u3)


@nb.njit(nogil=True, cache=True)
def _transport_chunk(x, ux, uy, uz, t, flights, first_id, t_census, sigma, c, seed, fcoef, legendre, lower, upper):
    n = x.size
    active = np.empty(n, np.int64)
    scattered = np.empty(n, np.int64)
    ucos = np.empty(n)
    uphi = np.empty(n)
    mus = np.empty(n)
    n_active = 0
    for i in range(n):
        if t[i] < t_census:
            active[n_active] = i
            n_active += 1
    while n_active > 0:
        m = 0
        for k in range(n_active):
            i = active[k]
            u0, u1, u2, _ = uniform_block(seed, first_id + i, TAG_TRANSPORT, flights[i])
            flights[i] += 1
            s = -math.log(1.0 - u0) / sigma
            if t[i] + s / c >= t_census:
                x[i] = _wrap(x[i] + ux[i] * (c * (t_census - t[i])))
                t[i] = t_census
            else:
                x[i] = _wrap(x[i] + ux[i] * s)
                t[i] += s / c
                scattered[m] = i
                ucos[m] = u1
                uphi[m] = u2
                m += 1
        if not invert_cdf_batch(fcoef, legendre, lower, upper, ucos, mus, m):
            return False
        for k in range(m):
            i = scattered[k]
            ux[i], uy[i], uz[i] = rotate(ux[i], uy[i], uz[i], mus[k], 2.0 * math.pi * uphi[k])
        active, scattered = scattered, active
        n_active = m
    return True


@nb.njit(nogil=True, cache=True)
def _tally_chunk(x, ux, n_cells, counts, mu_sum, mu2_sum):
    dx = LENGTH / n_cells
    for i in range(x.size):
        j = int((x[i] - X_MIN) / dx)
        if j >= n_cells:
            j = n_cells - 1
        counts[j] += 1
        mu_sum[j] += ux[i]
        mu2_sum[j] += ux[i] * ux[i]


def default_workers() -> int:
    value = os.environ.get(THREADS_ENV)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {value!r}") from None
    return os.cpu_count() or 1


class Ensemble:
    """Struct-of-arrays particle state; history ``i`` owns stream ``(seed, i)``."""

    def __init__(self, n: int, weight: float, seed: int):
        self.seed = seed
        self.weight = weight
        self.x = np.zeros(n)
        self.ux = np.zeros(n)
        self.uy = np.zeros(n)
        self.uz = np.ones(n)
        self.t = np.zeros(n)
        self.flights = np.zeros(n, dtype=np.int64)

    def __len__(self) -> int:
        return self.x.size

    def chunks(self):
        for start in range(0, len(self), CHUNK):
            yield start, min(start + CHUNK, len(self))

    def particles(self) -> list[Particle]:
        return [
            Particle(float(self.x[i]), Direction(float(self.ux[i]), float(self.uy[i]), float(self.uz[i])), self.weight, float(self.t[i]))
            for i in range(len(self))
        ]


def _check_kernel(kernel: ScatteringKernel) -> ScatteringKernel:
    kernel = normalize(kernel)
    validate_positivity(kernel)
    return kernel


def _source(ens: Ensemble, pool):
    def work(bounds):
        a, b = bounds
        _source_chunk(np.uint64(ens.seed), a, ens.x[a:b], ens.ux[a:b], ens.uy[a:b], ens.uz[a:b])

    list(pool.map(work, ens.chunks()))


def sample_initial_ensemble(config: SimulationConfig, workers: int | None = None) -> list[Particle]:
    """Positions from 10 + 5 sin(pi x / 2), isotropic directions, weight 40/N."""
    ens = Ensemble(config.n_particles, config.particle_weight, config.seed)
    with ThreadPoolExecutor(workers or default_workers()) as pool:
        _source(ens, pool)
    return ens.particles()


def _census(ens: Ensemble, t_census: float, config: SimulationConfig, sampler, pool) -> TallyGrid:
    seed = np.uint64(config.seed)

    def work(bounds):
        a, b = bounds
        if t_census > 0:
            ok = _transport_chunk(
                ens.x[a:b], ens.ux[a:b], ens.uy[a:b], ens.uz[a:b], ens.t[a:b], ens.flights[a:b],
                a, t_census, config.sigma, config.c, seed, sampler.fcoef, sampler.legendre, sampler.lower, sampler.upper,
            )
            if not ok:
                raise RuntimeError("CDF inversion failed during transport")
        part = TallyGrid(config.n_cells, ens.weight)
        _tally_chunk(ens.x[a:b], ens.ux[a:b], config.n_cells, part.counts, part.mu_sum, part.mu2_sum)
        return part

    parts = list(pool.map(work, ens.chunks()))
    grid = TallyGrid(config.n_cells, ens.weight)
    # merge in chunk order so the float sums do not depend on the worker count
    for part in parts:
        grid.counts += part.counts
        grid.mu_sum += part.mu_sum
        grid.mu2_sum += part.mu2_sum
    return grid


def run_simulation(config: SimulationConfig, workers: int | None = None, progress=None) -> list[tuple[float, TallyGrid]]:
    """Tallies at every census time from 0 to ``t_end``."""
    kernel = _check_kernel(config.kernel)
    sampler = sampler_for(kernel)
    ens = Ensemble(config.n_particles, config.particle_weight, config.seed)
    series = []
    with ThreadPoolExecutor(workers or default_workers()) as pool:
        _source(ens, pool)
        for t_census in config.census_times():
            series.append((t_census, _census(ens, t_census, config, sampler, pool)))
            if progress is not None:
                progress(t_census)
    return series


def tally(particles, grid: TallyGrid) -> TallyGrid:
    """Accumulate census-synchronized, equal-weight particles into ``grid``."""
    particles = list(particles)
    if not particles:
        return grid
    clocks = {p.t for p in particles}
    if len(clocks) > 1:
        raise ValueError("tally needs census-synchronized particles (equal clocks)")
    if any(p.weight != grid.particle_weight for p in particles):
        raise ValueError("particle weights must equal the grid's particle_weight")
    x = np.array([p.x for p in particles])
    ux = np.array([p.dir.x for p in particles])
    _tally_chunk(x, ux, grid.n_cells, grid.counts, grid.mu_sum, grid.mu2_sum)
    return grid


def advance_particle(p: Particle, t_census: float, config: SimulationConfig, stream: RandomStream) -> Particle:
    """Advance one history to ``t_census``; ``stream.block`` counts its flights.

    Uses the same compiled loop as ``run_simulation``, so a history driven
    through this function with stream ``(seed, i)`` matches history ``i`` of a
    full run.
    """
    if not p.t < t_census:
        raise ValueError("particle clock must be before the census time")
    if stream.seed != config.seed:
        raise ValueError("stream seed must match config seed")
    sampler = sampler_for(_check_kernel(config.kernel))
    x = np.array([p.x])
    ux, uy, uz = (np.array([v]) for v in p.dir.as_tuple())
    t = np.array([p.t])
    flights = np.array([stream.block], dtype=np.int64)
    ok = _transport_chunk(
        x, ux, uy, uz, t, flights, stream.stream_id, float(t_census), config.sigma, config.c,
        np.uint64(config.seed), sampler.fcoef, sampler.legendre, sampler.lower, sampler.upper,
    )
    if not ok:
        raise RuntimeError("CDF inversion failed during transport")
    stream.block = int(flights[0])
    return Particle(float(x[0]), Direction(float(ux[0]), float(uy[0]), float(uz[0])), p.weight, float(t[0]))


def initial_stream(config: SimulationConfig, history: int) -> RandomStream:
    """Transport stream of history ``history`` before its first flight."""
    return RandomStream(config.seed, history, tag=TAG_TRANSPORT)
