"""Monte Carlo transport with polynomial anisotropic scattering and its diffusion limit."""

from .errors import (
    AnisoscatError,
    ConfigError,
    ConvergenceFailure,
    DomainError,
    InsufficientData,
    NegativeDensity,
    NonPositiveNormalization,
    SingularKernel,
)
from .phase_function import (
    PRESETS,
    Basis,
    ScatteringKernel,
    evaluate,
    mean_cosine,
    normalize,
    parse_kernel,
    polynomial_moment,
    preset,
    resolve_kernel,
    validate_positivity,
)
from .sampling import Direction, rotate_direction, sample_azimuth, sample_cosine, sample_isotropic
from .streams import RandomStream
from .theory import DiffusionPrediction, amplitude, diffusion_coefficient, predict, sphere_monomial_moment, transport_mfp
from .transport import Particle, SimulationConfig, TallyGrid, advance_particle, run_simulation, sample_initial_ensemble, tally
from .analysis import DecayFit, analyze_decay, compare_to_theory, diffusive_diagnostics, extract_amplitude, fit_decay_rate

__version__ = "0.1.0"
