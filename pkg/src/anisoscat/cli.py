"""Command-line driver: ``anisoscat run | verify-kernel | sweep | tables``."""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from dataclasses import dataclass, fields, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import stats

from . import analysis
from .errors import AnisoscatError, ConfigError, InsufficientData, NegativeDensity
from .phase_function import PRESETS, ScatteringKernel, mean_cosine, normalize, parse_kernel, preset, resolve_kernel
from .sampling import sample_isotropic_many, sampler_for, scatter_many
from .theory import predict
from .transport import SimulationConfig, run_simulation

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

PROFILES = {
    "full": {"n_particles": 10_000_000, "n_cells": 1000},
    "fast": {"n_particles": 1_000_000, "n_cells": 200},
}
VERIFY_DRAWS = 1_000_000
CHI2_BINS = 50
CHI2_MIN_P = 1e-3


@dataclass(frozen=True)
class ExperimentConfig:
    kernel_name: str | None = "isotropic"
    kernel_spec: str | None = None
    sigma: float = 10.0
    c: float = 1.0
    n_particles: int = PROFILES["full"]["n_particles"]
    n_cells: int = PROFILES["full"]["n_cells"]
    t_end: float | None = None
    census_dt: float = 0.25
    seed: int = 1
    tolerance: float = 0.03
    output_dir: str = "out"

    def __post_init__(self):
        if self.kernel_name and self.kernel_spec:
            raise ConfigError("give either a kernel preset or an inline kernel spec, not both")
        if not (self.kernel_name or self.kernel_spec):
            raise ConfigError("no kernel given")
        if self.kernel_name:
            try:
                preset(self.kernel_name)
            except KeyError as exc:
                raise ConfigError(exc.args[0]) from None
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")
        if not self.census_dt > 0:
            raise ConfigError("census_dt must be positive")

    @property
    def label(self) -> str:
        return self.kernel_name or "inline"

    def kernel(self) -> ScatteringKernel:
        return resolve_kernel(self.kernel_name or self.kernel_spec)

    def default_t_end(self) -> float:
        """End of the transient plus the time for the predicted amplitude to fall
        to a third, rounded up to a whole census interval."""
        rate = predict(self.kernel(), self.sigma, self.c).decay_rate
        t = analysis.TRANSIENT_MFT / (self.c * self.sigma) + math.log(3.0) / rate
        return math.ceil(t / self.census_dt - 1e-9) * self.census_dt

    def simulation(self) -> SimulationConfig:
        t_end = self.default_t_end() if self.t_end is None else self.t_end
        try:
            return SimulationConfig(
                kernel=self.kernel(), sigma=self.sigma, c=self.c, n_particles=self.n_particles,
                n_cells=self.n_cells, t_end=t_end, census_dt=self.census_dt, seed=self.seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


_KEYS = {
    "kernel": ("kernel_name", str),
    "kernel_spec": ("kernel_spec", str),
    "sigma": ("sigma", float),
    "c": ("c", float),
    "particles": ("n_particles", lambda v: int(float(v))),
    "cells": ("n_cells", int),
    "t_end": ("t_end", float),
    "census_dt": ("census_dt", float),
    "seed": ("seed", int),
    "tolerance": ("tolerance", float),
    "out": ("output_dir", str),
}


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lower().replace("-", "_")
        if not sep or not value.strip():
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        values[key] = value.strip()
    return values


def _apply(values: dict, base: dict) -> dict:
    out = dict(base)
    if "profile" in values:
        name = values.pop("profile").lower()
        if name not in PROFILES:
            raise ConfigError(f"unknown profile {name!r}; choose from {', '.join(PROFILES)}")
        out.update(PROFILES[name])
    if "kernel" in values or "kernel_spec" in values:
        out["kernel_name"] = None
        out["kernel_spec"] = None
    for key, raw in values.items():
        if key not in _KEYS:
            if key in ("sigmas",):
                continue
            raise ConfigError(f"unknown config key {key!r}")
        name, conv = _KEYS[key]
        try:
            value = conv(raw)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
        if key == "kernel" and "=" in raw:
            name, value = "kernel_spec", raw
        out[name] = value
    return out


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    base = {f.name: f.default for f in fields(ExperimentConfig)}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        base = _apply(parse_config_text(text), base)
    flags = {
        "profile": args.profile, "kernel": args.kernel, "sigma": args.sigma, "c": args.c,
        "particles": args.particles, "cells": args.cells, "t_end": args.t_end,
        "census_dt": args.census_dt, "seed": args.seed, "tolerance": args.tolerance, "out": args.out,
    }
    base = _apply({k: str(v) for k, v in flags.items() if v is not None}, base)
    try:
        return ExperimentConfig(**base)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _log(msg: str):
    print(msg, file=sys.stderr, flush=True)


def execute(config: ExperimentConfig, out_dir: Path | None = None, quiet: bool = False):
    """Run one experiment, write its files and return the decay analysis (or None)."""
    sim = config.simulation()
    pred = predict(sim.kernel, sim.sigma, sim.c)
    out_dir = Path(out_dir or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    series = run_simulation(sim)
    if not quiet:
        _log(f"[{config.label} sigma={sim.sigma:g}] {len(series)} censuses in {time.perf_counter() - start:.1f}s")
    analysis.write_tally_csv(out_dir / "tallies.csv", series)
    analysis.write_summary_csv(out_dir / "summary.csv", series, pred)
    title = f"kernel {config.label} ({sim.kernel}); sigma {sim.sigma:g}; c {sim.c:g}; particles {sim.n_particles}; cells {sim.n_cells}; seed {sim.seed}"
    try:
        result = analysis.analyze_decay(series, pred, sim.sigma, sim.c, config.tolerance)
    except InsufficientData as exc:
        (out_dir / "report.txt").write_text(f"{title}\ntheory_rate         {pred.decay_rate:.17g}\nno fit: {exc}\n")
        return None
    (out_dir / "report.txt").write_text(result.report_text(title))
    return result


def cmd_run(config: ExperimentConfig) -> int:
    result = execute(config)
    report = Path(config.output_dir) / "report.txt"
    print(report.read_text(), end="")
    if result is None:
        sim = config.simulation()
        # a single census has nothing to fit; any other shortfall is a failure
        return EXIT_OK if len(sim.census_times()) == 1 else EXIT_FAIL
    return EXIT_OK if result.comparison.passed else EXIT_FAIL


def _even_only(kernel: ScatteringKernel) -> bool:
    mono = kernel.monomial_coefficients()
    return bool(np.all(mono[1::2] == 0.0))


def verify_kernel(kernel: ScatteringKernel, seed: int = 1, draws: int = VERIFY_DRAWS) -> dict:
    """Analytic vs sampled mean cosine, histogram chi-square and isotropy moments."""
    kernel = resolve_kernel(kernel)
    g = mean_cosine(kernel)
    sampler = sampler_for(kernel)
    mu = sampler.sample_many(seed, 0, draws)
    bound = 4.0 / math.sqrt(draws)
    edges = np.linspace(-1.0, 1.0, CHI2_BINS + 1)
    evaluate_cdf = np.polynomial.legendre.legval if sampler.legendre else np.polynomial.polynomial.polyval
    cdf = evaluate_cdf(edges, sampler.fcoef)
    expected = np.diff(cdf) * draws
    observed = np.histogram(mu, bins=edges)[0]
    chi2 = stats.chisquare(observed, expected * observed.sum() / expected.sum())
    out = {
        "g_analytic": g,
        "g_sampled": float(mu.mean()),
        "g_ok": abs(float(mu.mean()) - g) <= bound,
        "chi2": float(chi2.statistic),
        "chi2_p": float(chi2.pvalue),
        "chi2_ok": float(chi2.pvalue) > CHI2_MIN_P,
        "bound": bound,
    }
    if _even_only(kernel):
        dirs = scatter_many(kernel, sample_isotropic_many(seed, 1, draws), seed, 2)
        moments = {
            "<mu>": float(dirs[:, 0].mean()),
            "<xi>": float(dirs[:, 1].mean()),
            "<zeta>": float(dirs[:, 2].mean()),
            "<mu^2>": float((dirs[:, 0] ** 2).mean()),
        }
        targets = {"<mu>": 0.0, "<xi>": 0.0, "<zeta>": 0.0, "<mu^2>": 1.0 / 3.0}
        out["isotropy"] = moments
        out["isotropy_ok"] = all(abs(moments[k] - targets[k]) <= bound for k in moments)
    return out


def cmd_verify_kernel(config: ExperimentConfig) -> int:
    try:
        kernel = config.kernel()
    except NegativeDensity as exc:
        print(f"invalid kernel: {exc}")
        return EXIT_USAGE
    res = verify_kernel(kernel, seed=config.seed)
    ok = res["g_ok"] and res["chi2_ok"] and res.get("isotropy_ok", True)
    print(f"kernel        {config.label} ({kernel})")
    print(f"g_analytic    {res['g_analytic']:.17g}")
    print(f"g_sampled     {res['g_sampled']:.17g}  bound {res['bound']:.3g}  {'ok' if res['g_ok'] else 'FAIL'}")
    print(f"chi2          {res['chi2']:.6g}  p={res['chi2_p']:.4g}  {'ok' if res['chi2_ok'] else 'FAIL'}")
    if "isotropy" in res:
        moments = "  ".join(f"{k}={v:.6f}" for k, v in res["isotropy"].items())
        print(f"isotropy      {moments}  {'ok' if res['isotropy_ok'] else 'FAIL'}")
    print(f"result        {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def _kernel_list(config: ExperimentConfig, raw: str | None) -> list[ExperimentConfig]:
    if raw is None:
        return [config]
    names = list(PRESETS) if raw.strip().lower() == "all" else [n.strip() for n in raw.split(",") if n.strip()]
    try:
        return [replace(config, kernel_name=n, kernel_spec=None) for n in names]
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_sweep(config: ExperimentConfig, sigmas: list[float], kernels: list[ExperimentConfig] | None = None) -> int:
    if not sigmas:
        raise ConfigError("sweep needs at least one sigma")
    kernels = kernels or [config]
    root = Path(config.output_dir)
    rows = []
    for kcfg in kernels:
        for sigma in sigmas:
            cfg = replace(kcfg, sigma=sigma)
            sub = root / f"{cfg.label}_sigma{sigma:g}"
            result = execute(cfg, out_dir=sub)
            theory = predict(cfg.kernel(), sigma, cfg.c).decay_rate
            if result is None:
                rows.append([cfg.label, sigma, theory, math.nan, math.nan, "FAIL"])
            else:
                c = result.comparison
                rows.append([cfg.label, sigma, c.theory_rate, c.fitted_rate, c.rel_error, "PASS" if c.passed else "FAIL"])
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kernel", "sigma", "theory_rate", "fitted_rate", "rel_error", "result"])
        for r in rows:
            w.writerow([r[0], f"{r[1]:.17g}", f"{r[2]:.17g}", f"{r[3]:.17g}", f"{r[4]:.17g}", r[5]])
    print(f"{'kernel':<10}{'sigma':>8}{'theory':>14}{'fitted':>14}{'rel_err':>10}  result")
    for r in rows:
        print(f"{r[0]:<10}{r[1]:>8g}{r[2]:>14.6g}{r[3]:>14.6g}{r[4]:>10.4f}  {r[5]}")
    for kcfg in kernels:
        errs = [r[4] for r in rows if r[0] == kcfg.label]
        if len(errs) > 1 and not any(math.isnan(e) for e in errs):
            monotone = all(b <= a for a, b in zip(errs, errs[1:]))
            print(f"{kcfg.label}: error {'non-increasing' if monotone else 'NOT monotone'} in sigma order given")
    return EXIT_OK if all(r[5] == "PASS" for r in rows) else EXIT_FAIL


def _fraction(value: float) -> str:
    f = Fraction(value).limit_denominator(1000)
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def table_rows() -> list[dict]:
    rows = []
    for name, raw in PRESETS.items():
        kernel = normalize(raw)
        pred = predict(kernel, sigma=1.0, c=1.0)
        rows.append({
            "symbol": name,
            "kernel": str(raw),
            "g_bar": pred.g_bar,
            "D_sigma_over_c": pred.D,
            "D": f"c/{_fraction(1.0 / pred.D)}σ",
        })
    return rows


def cmd_tables() -> int:
    print(f"{'symbol':<10}{'g_bar':>24}{'':>6}{'D*sigma/c':>24}  D")
    for r in table_rows():
        print(f"{r['symbol']:<10}{r['g_bar']:>24.17g}{_fraction(r['g_bar']):>6}{r['D_sigma_over_c']:>24.17g}  {r['D']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--profile", choices=sorted(PROFILES), help="particle/cell preset")
    common.add_argument("--kernel", help="preset symbol or 'basis=...; coeffs=...'")
    common.add_argument("--sigma", type=float)
    common.add_argument("--c", type=float, help="particle speed")
    common.add_argument("--particles", type=float)
    common.add_argument("--cells", type=int)
    common.add_argument("--t-end", type=float)
    common.add_argument("--census-dt", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--tolerance", type=float)
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="anisoscat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="simulate and compare with the diffusion prediction")
    sub.add_parser("verify-kernel", parents=[common], help="check sampler statistics for a kernel")
    sweep = sub.add_parser("sweep", parents=[common], help="run over several sigma values")
    sweep.add_argument("--sigmas", required=True, help="comma-separated sigma values")
    sweep.add_argument("--kernels", help="comma-separated presets, or 'all' (default: --kernel)")
    sub.add_parser("tables", help="print analytic g_bar and D for every preset")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "tables":
        return cmd_tables()
    try:
        config = build_config(args)
        if args.command == "run":
            return cmd_run(config)
        if args.command == "verify-kernel":
            return cmd_verify_kernel(config)
        try:
            sigmas = [float(s) for s in args.sigmas.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"bad sigma list {args.sigmas!r}") from None
        return cmd_sweep(config, sigmas, _kernel_list(config, args.kernels))
    except (ConfigError, NegativeDensity, AnisoscatError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
