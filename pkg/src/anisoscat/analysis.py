"""Post-processing of census tallies: decay fits and diffusive diagnostics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientData
from .theory import BACKGROUND, DiffusionPrediction, amplitude
from .transport import TallyGrid

PEAK_X = 1.0
VALLEY_X = -1.0
NOISE_SIGMAS = 5.0
TRANSIENT_MFT = 3.0  # mean free times dropped before fitting
GRADIENT_SIGMAS = 3.0


@dataclass(frozen=True)
class DecayFit:
    rate: float
    rate_stderr: float
    intercept: float
    window: tuple[float, float]
    n_points: int


@dataclass(frozen=True)
class TheoryComparison:
    theory_rate: float
    fitted_rate: float
    rel_error: float
    tolerance: float
    passed: bool


def extract_amplitude(series, x_probe: float) -> list[tuple[float, float]]:
    """(t, rho - 10) in the cell containing ``x_probe`` at each census."""
    if not -2.0 <= x_probe < 2.0:
        raise ValueError("probe must lie in [-2, 2)")
    out = []
    for t, grid in series:
        out.append((t, float(grid.rho[grid.cell_index(x_probe)]) - BACKGROUND))
    return out


def probe_noise_floor(series, x_probe: float, n_sigma: float = NOISE_SIGMAS) -> float:
    """``n_sigma`` times the census-estimator standard deviation of the probe cell.

    Cell counts are binomial, so Var(rho_i) is close to rho_i * w / dx.
    """
    var = [grid.particle_weight * grid.rho[grid.cell_index(x_probe)] / grid.dx for _, grid in series]
    return n_sigma * math.sqrt(float(np.mean(var)))


def fit_decay_rate(series, noise_floor: float, t_min: float = -math.inf) -> DecayFit:
    """Least-squares line through ln|A| against t; rate is minus the slope.

    Points before ``t_min``, with ``|A| <= noise_floor``, or with the opposite
    sign to the first usable point are left out.
    """
    pts = [(t, a) for t, a in series if t >= t_min and abs(a) > noise_floor]
    if pts:
        sign = math.copysign(1.0, pts[0][1])
        pts = [(t, a) for t, a in pts if math.copysign(1.0, a) == sign]
    if len(pts) < 3:
        raise InsufficientData(f"need at least 3 usable points, got {len(pts)}")
    t = np.array([p[0] for p in pts])
    y = np.log(np.abs([p[1] for p in pts]))
    tc = t - t.mean()
    sxx = float(tc @ tc)
    if sxx == 0.0:
        raise InsufficientData("all usable points share one time")
    slope = float(tc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * t.mean())
    resid = y - (intercept + slope * t)
    dof = len(t) - 2
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else 0.0
    return DecayFit(rate=-slope, rate_stderr=stderr, intercept=intercept, window=(float(t[0]), float(t[-1])), n_points=len(t))


def compare_to_theory(fit: DecayFit | float, prediction: DiffusionPrediction, tolerance: float = 0.03) -> TheoryComparison:
    rate = fit.rate if isinstance(fit, DecayFit) else float(fit)
    theory = prediction.decay_rate
    rel = abs(rate - theory) / theory
    return TheoryComparison(theory_rate=theory, fitted_rate=rate, rel_error=rel, tolerance=tolerance, passed=rel <= tolerance)


@dataclass
class DecayAnalysis:
    """Peak and valley fits plus their combined comparison with theory."""

    peak: DecayFit
    valley: DecayFit
    comparison: TheoryComparison
    prediction: DiffusionPrediction
    t_min: float
    noise_floors: tuple[float, float]

    @property
    def fitted_rate(self) -> float:
        return self.comparison.fitted_rate

    def report_text(self, title: str = "") -> str:
        cmp = self.comparison
        lines = [title] if title else []
        lines += [
            f"g_bar               {self.prediction.g_bar:.17g}",
            f"D                   {self.prediction.D:.17g}",
            f"theory_rate         {cmp.theory_rate:.17g}",
            f"fitted_rate         {cmp.fitted_rate:.17g}",
            f"fitted_rate_peak    {self.peak.rate:.17g} +- {self.peak.rate_stderr:.3g} (n={self.peak.n_points})",
            f"fitted_rate_valley  {self.valley.rate:.17g} +- {self.valley.rate_stderr:.3g} (n={self.valley.n_points})",
            f"fit_window          {self.t_min:.6g} .. {max(self.peak.window[1], self.valley.window[1]):.6g}",
            f"relative_error      {cmp.rel_error:.6g}",
            f"tolerance           {cmp.tolerance:.6g}",
            f"result              {'PASS' if cmp.passed else 'FAIL'}",
        ]
        return "\n".join(lines) + "\n"


def analyze_decay(series, prediction: DiffusionPrediction, sigma: float, c: float = 1.0, tolerance: float = 0.03) -> DecayAnalysis:
    """Fit both probes after the kinetic transient; the headline rate is their mean."""
    t_min = TRANSIENT_MFT / (c * sigma)
    fits = []
    floors = []
    for x in (PEAK_X, VALLEY_X):
        floor = probe_noise_floor(series, x)
        fits.append(fit_decay_rate(extract_amplitude(series, x), floor, t_min=t_min))
        floors.append(floor)
    rate = 0.5 * (fits[0].rate + fits[1].rate)
    return DecayAnalysis(
        peak=fits[0], valley=fits[1], comparison=compare_to_theory(rate, prediction, tolerance),
        prediction=prediction, t_min=t_min, noise_floors=tuple(floors),
    )


@dataclass
class DiffusiveDiagnostics:
    moment_ratio: np.ndarray  # J_xx / rho per cell
    flux: np.ndarray
    flux_fick: np.ndarray
    flux_mask: np.ndarray = field(repr=False)

    @property
    def mean_moment_ratio(self) -> float:
        return float(np.mean(self.moment_ratio))

    @property
    def moment_ratio_l2(self) -> float:
        """RMS deviation of J_xx/rho from 1/3 over cells."""
        return float(np.sqrt(np.mean((self.moment_ratio - 1.0 / 3.0) ** 2)))

    @property
    def residual_sq(self) -> float:
        d = (self.flux - self.flux_fick)[self.flux_mask]
        return float(d @ d)

    @property
    def reference_sq(self) -> float:
        r = self.flux_fick[self.flux_mask]
        return float(r @ r)

    @property
    def flux_l2_error(self) -> float:
        """Relative L2 misfit of tallied J_x against Fick's law on masked cells."""
        if not self.flux_mask.any():
            return 0.0
        return math.sqrt(self.residual_sq / self.reference_sq)


def diffusive_diagnostics(grid: TallyGrid, prediction: DiffusionPrediction) -> DiffusiveDiagnostics:
    """J_xx/rho against 1/3 and J_x against -(lambda_tr/3) d(rho)/dx.

    The gradient is a periodic central difference; only cells where it
    exceeds three times its own counting noise enter the flux misfit.
    """
    rho = grid.rho
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rho > 0, grid.jxx / rho, np.nan)
    ratio = ratio[np.isfinite(ratio)]
    dx = grid.dx
    grad = (np.roll(rho, -1) - np.roll(rho, 1)) / (2.0 * dx)
    var = grid.particle_weight * rho / dx
    grad_sd = np.sqrt(np.roll(var, -1) + np.roll(var, 1)) / (2.0 * dx)
    mask = np.abs(grad) > GRADIENT_SIGMAS * grad_sd
    fick = -(prediction.lambda_tr / 3.0) * grad
    return DiffusiveDiagnostics(moment_ratio=ratio, flux=grid.jx.copy(), flux_fick=fick, flux_mask=mask)


def pooled_flux_error(diagnostics) -> float:
    """Relative L2 flux misfit pooled over several censuses."""
    num = sum(d.residual_sq for d in diagnostics)
    den = sum(d.reference_sq for d in diagnostics)
    return math.sqrt(num / den) if den > 0 else 0.0


def write_summary_csv(path, series, prediction: DiffusionPrediction):
    peak = extract_amplitude(series, PEAK_X)
    valley = extract_amplitude(series, VALLEY_X)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "A_peak", "A_valley", "A_theory_peak", "A_theory_valley"])
        for (t, a_p), (_, a_v) in zip(peak, valley):
            row = [t, a_p, a_v, amplitude(PEAK_X, t, prediction.D), amplitude(VALLEY_X, t, prediction.D)]
            w.writerow([f"{v:.17g}" for v in row])


def write_tally_csv(path, series):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "cell_center", "rho", "jx", "jxx"])
        for t, grid in series:
            for xc, r, j1, j2 in zip(grid.cell_centers, grid.rho, grid.jx, grid.jxx):
                w.writerow([f"{t:.17g}", f"{xc:.17g}", f"{r:.17g}", f"{j1:.17g}", f"{j2:.17g}"])
