"""Command line interface: ``stochburgers <subcommand> CONFIG``.

Every subcommand reads a flat ``key = value`` configuration, writes CSV
reports plus ``manifest_<subcommand>.json`` into ``output_path`` and exits with

0  all checks passed
1  a check failed
2  configuration error
3  blow-up beyond the censoring budget
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ERGODICITY_SUITES, SimConfig, parse_config, parse_initial
from .deterministic import calibrate_energy, contraction_sweep, graded_grid, local_time, picard_solve, verify_picard
from .diagnostics import (coupling_contraction, harris_parameters, invariant_measure_profile, lyapunov_drift,
                          mixing_rate, null_calibration, shaped_initial, small_noise_frequency)
from .errors import BlowUpError, ConfigError, HorizonTooLargeError
from .noise import convolution_path, generate_path, verify_convolution_moments, verify_convolution_oracle
from .report import RunManifest, file_digest, write_report
from .rng import derive_seed, make_rng
from .sensitivity import gradient_check, variational_growth_bound
from .spde import (Dynamics, ensemble_stats, exit_probability_bound, simulate, simulate_ensemble,
                   strong_feller_check)
from .spectral import NoiseIntensity, sobolev_norm_coeffs
from .subordinator import StableSubordinatorSampler, verify_subordinator

__all__ = ["main", "run", "manifest_name", "COMMANDS", "CENSOR_BUDGET"]

CENSOR_BUDGET = 0.05

TRAJECTORY_COLUMNS = ["t", "norm0", "norm1"] + [f"{c}{k}" for k in range(1, 5) for c in ("a", "b")]
ENSEMBLE_COLUMNS = ["t", "observable", "mean", "stderr", "q05", "q50", "q95", "n_censored"]
SUBORDINATOR_COLUMNS = ["test", "parameter", "estimate", "stderr", "target", "pass"]
CONVOLUTION_COLUMNS = ["T", "estimate", "stderr", "fitted_slope", "target_slope", "pass"]
GRADIENT_COLUMNS = ["n_modes", "t", "direction", "bismut", "bismut_se", "fd", "fd_se", "pass"]


def _size(cfg: SimConfig, full: int, floor: int) -> int:
    return max(floor, int(round(full * cfg.sample_scale)))


def _noise(cfg: SimConfig, n: int) -> NoiseIntensity:
    return NoiseIntensity(n, cfg.theta, cfg.theta_prime, cfg.delta)


def cmd_simulate(cfg: SimConfig, out: Path, manifest: RunManifest) -> None:
    rec = simulate(cfg.initial_field(), cfg)
    manifest.add_output(write_report(rec.rows(), out / "trajectory.csv", TRAJECTORY_COLUMNS))
    manifest.add_suite("simulate", True, exit_time=rec.exit_time, final_norm0=float(rec.norm0[-1]))


def cmd_ensemble(cfg: SimConfig, out: Path, manifest: RunManifest) -> None:
    res = simulate_ensemble(cfg.initial_field().coeffs, cfg.dynamics(), cfg.dt, cfg.n_steps, cfg.alpha, cfg.seed,
                            cfg.ensemble_size, observables=cfg.observables, record_every=cfg.record_every)
    rows = []
    for name in cfg.observables:
        rows.extend(ensemble_stats(res.values[name][0], res.times, name).rows())
    manifest.add_output(write_report(rows, out / "ensemble.csv", ENSEMBLE_COLUMNS))
    frac = res.n_censored / cfg.ensemble_size
    manifest.add_suite("ensemble", True, n_censored=res.n_censored, censored_fraction=frac)
    if frac > CENSOR_BUDGET:
        raise BlowUpError(f"censored fraction {frac:.3g} exceeds the budget {CENSOR_BUDGET}")


def cmd_picard(cfg: SimConfig, out: Path, manifest: RunManifest) -> None:
    phi = cfg.initial_field().coeffs
    times = graded_grid(cfg.t_end, cfg.dt)
    path = generate_path(StableSubordinatorSampler(cfg.alpha, rng=make_rng(cfg.seed, 0)), cfg.n_modes, times)
    z = convolution_path(path, cfg.noise())
    radius = max(float(sobolev_norm_coeffs(phi)), float(np.max(sobolev_norm_coeffs(z, 1.0))))
    details = {"R": radius, "T_R": local_time(radius, cfg.n_modes).T}
    try:
        w = picard_solve(phi, z, times)
    except HorizonTooLargeError as exc:
        manifest.add_suite("picard", False, factor=exc.factor, **details)
        return
    u = w.values + z
    rows = ({"t": t, "w_norm0": a, "w_norm1": b, "u_norm0": c, "u_norm1": d}
            for t, a, b, c, d in zip(times, sobolev_norm_coeffs(w.values), sobolev_norm_coeffs(w.values, 1.0),
                                      sobolev_norm_coeffs(u), sobolev_norm_coeffs(u, 1.0)))
    manifest.add_output(write_report(rows, out / "picard.csv"))
    manifest.add_suite("picard", True, iterations=w.iterations, m_norm=w.m_norm,
                       max_factor=max(w.contraction_factors, default=0.0), **details)


def cmd_verify_subordinator(cfg: SimConfig, out: Path, manifest: RunManifest) -> None:
    rep = verify_subordinator(n_draws=_size(cfg, 1_000_000, 1000), slope_alpha=cfg.alpha,
                              n_slope=_size(cfg, 100_000, 1000), seed=cfg.seed)
    manifest.add_output(write_report(rep.rows(), out / "subordinator.csv", SUBORDINATOR_COLUMNS))
    for test in ("laplace", "negative_moment", "negative_moment_slope"):
        rows = [r for r in rep.records if r["test"] == test]
        manifest.add_suite(test, all(r["pass"] for r in rows))


def cmd_verify_convolution(cfg: SimConfig, out: Path, manifest: RunManifest) -> None:
    q = _noise(cfg, cfg.n_modes)
    mom = verify_convolution_moments(q, cfg.alpha, 2.0 ** np.arange(-8, -2), p=1.0, theta=0.5,
                                     n_paths=_size(cfg, 10_000, 200), seed=cfg.seed)
    manifest.add_output(write_report(mom.rows(), out / "convolution.csv", CONVOLUTION_COLUMNS))
    manifest.add_suite("moment_scaling", mom.passed, fitted_slope=mom.fitted_slope, target=mom.target_slope)
    orc = verify_convolution_oracle(q, cfg.alpha, n_paths=_size(cfg, 1000, 50), seed=derive_seed(cfg.seed, 1))
    manifest.add_output(write_report(orc.rows(), out / "convolution_oracle.csv"))
    manifest.add_suite("ibp_oracle", orc.passed, order=orc.order)


def cmd_verify_picard(cfg: SimConfig, out: Path, manifest: RunManifest) -> None:
    rep = verify_picard(n=64, radius=0.5, n_pairs=_size(cfg, 100, 2), alpha=cfg.alpha, seed=cfg.seed,
                        n_energy=_size(cfg, 100, 5))
    manifest.add_output(write_report(rep.rows(), out / "picard_checks.csv",
                                     ["check", "index", "value", "bound", "pass"]))
    for name, ok in rep.checks().items():
        manifest.add_suite(name, ok, worst=rep.worst(name))
    manifest.details["local_time"] = {"R": rep.local.R, "c_sigma": rep.local.c_sigma, "T": rep.local.T}
    manifest.details["energy_constants"] = list(rep.energy_constants)
    sweep = contraction_sweep(5.0, n=32, n_pairs=_size(cfg, 10, 2), seed=derive_seed(cfg.seed, 7))
    manifest.add_output(write_report(({"R": 5.0, "T": t, "max_ratio": r} for t, r in sweep),
                                     out / "contraction_sweep.csv"))


def cmd_gradient_check(cfg: SimConfig, out: Path, manifest: RunManifest) -> None:
    def make_dynamics(n):
        return Dynamics(_noise(cfg, n), "truncated", 1.0)

    base = parse_initial(cfg.initial, max(cfg.n_modes, 16)).coeffs

    def phi_of_n(n):
        return base[:, :n].copy()

    rows = gradient_check(make_dynamics, phi_of_n, n_samples=_size(cfg, 100_000, 2000), alpha=cfg.alpha,
                          seed=cfg.seed)
    manifest.add_output(write_report((r.row() for r in rows), out / "gradient_check.csv", GRADIENT_COLUMNS))
    manifest.add_suite("bismut_vs_fd", all(r.passed for r in rows))

    def direction_of_n(n):
        d = np.zeros((2, n))
        d[0, 0] = 1.0
        return d

    growth = variational_growth_bound(make_dynamics, phi_of_n, direction_of_n, alpha=cfg.alpha,
                                      n_paths=_size(cfg, 200, 20), seed=derive_seed(cfg.seed, 1))
    manifest.add_output(write_report(growth.rows(), out / "growth.csv"))
    manifest.details["growth_uniform"] = growth.uniform


SUMMARY_LINES = (
    ("lyapunov", "Lyapunov drift  E V(u_t) <= C_V exp(-gamma t) V(phi) + K_V,  V = 1 + ||.||_0"),
    ("coupling", "Synchronous coupling  ||u_t(phi1) - u_t(phi2)||_1 <= 2.1 t^(-1/2) ||phi1 - phi2||_0 on Omega_R"),
    ("exit_time", "Exit-time bound  P(tau_R <= t) <= E sup_(s<=t) ||Z_s||_1 / R"),
    ("strong_feller", "Strong Feller bound  |P_t Phi(phi1) - P_t Phi(phi2)| <= K t^(-1/alpha-(theta-1)/2) "
                      "||phi1 - phi2||_1 + K2 t^(1/alpha) / R"),
    ("small_noise", "Small-noise event  P(sup_(s<=t0+1) ||Z_s||_1 <= eps) > 0"),
    ("mixing", "Total-variation mixing (KS proxy)  D_t(phi1, phi2) <= C exp(-gamma* t)"),
    ("invariant_measure", "Unique invariant measure (Birkhoff and two-start agreement)"),
)


def cmd_ergodicity(cfg: SimConfig, out: Path, manifest: RunManifest) -> None:
    n = cfg.n_modes
    dyn = cfg.dynamics()
    seed = cfg.seed
    facts: dict = {}

    lyap = lyapunov_drift(dyn, n_paths=_size(cfg, 500, 40), n_heldout=_size(cfg, 20, 4), alpha=cfg.alpha,
                          seed=derive_seed(seed, 1))
    manifest.add_output(write_report(lyap.rows(), out / "lyapunov.csv"))
    manifest.add_suite("lyapunov", lyap.passed, rate=lyap.rate, rate_ci=list(lyap.rate_ci), C_V=lyap.c_v,
                       K_V=lyap.k_v, crossing_time=lyap.crossing_time, censored=lyap.censored_fraction)
    facts["lyapunov"] = (f"rate {lyap.rate:.4g} (95% CI {lyap.rate_ci[0]:.4g}..{lyap.rate_ci[1]:.4g}), "
                         f"C_V {lyap.c_v:.4g}, K_V {lyap.k_v:.4g}, held-out {int(np.sum(np.all(lyap.heldout_ok, axis=1)))}"
                         f"/{len(lyap.heldout_ok)}, crossing of 2 K_V from ||phi||_0 = 100 at t = "
                         f"{lyap.crossing_time:.3g} (timing argument predicts about {2 * math.log(100):.3g})")

    rng = make_rng(seed, 2)
    phi1 = shaped_initial(0.5, n, rng)
    dp = rng.standard_normal((2, n))
    phi2 = phi1 + 0.1 * dp / np.linalg.norm(dp)
    lt = local_time(1.0, n)
    coup = coupling_contraction(phi1, phi2, dyn, [0.1, lt.T], 1.0, n_paths=_size(cfg, 2000, 200), alpha=cfg.alpha,
                                seed=derive_seed(seed, 3))
    manifest.add_output(write_report(coup.rows(), out / "coupling.csv"))
    manifest.add_suite("coupling", coup.passed, n_omega=coup.n_omega, fraction_ok=list(coup.fraction_ok))
    facts["coupling"] = (f"{coup.n_omega} of {coup.n_paths} paths in Omega_R (R = 1), fraction within bound "
                         + ", ".join(f"{f:.4g} at t = {t:.3g}" for f, t in zip(coup.fraction_ok, coup.times)))

    small = shaped_initial(0.2, n, make_rng(seed, 3))
    ex = exit_probability_bound(small, dyn, 1.0, 1.0, alpha=cfg.alpha, n_paths=_size(cfg, 2000, 200),
                                seed=derive_seed(seed, 4))
    manifest.add_suite("exit_time", ex.passed, p_exit=ex.p_exit, z_bound=ex.z_bound)
    facts["exit_time"] = f"P(tau <= 1) = {ex.p_exit:.4g} +- {ex.p_exit_se:.2g}, bound {ex.z_bound:.4g}"

    sf = strong_feller_check(dyn, alpha=cfg.alpha, n_paths=_size(cfg, 2000, 200), seed=derive_seed(seed, 5))
    manifest.add_output(write_report(sf.rows(), out / "strong_feller.csv"))
    manifest.add_suite("strong_feller", sf.passed, K=sf.k1, K2=sf.k2)
    facts["strong_feller"] = (f"K = {sf.k1:.4g}, K2 = {sf.k2:.4g}, held-out checks "
                              f"{int(sf.heldout_ok.sum())}/{sf.heldout_ok.size}")

    energy = calibrate_energy(32, cfg.alpha, derive_seed(seed, 6), _size(cfg, 100, 5))
    radius = 2 * lyap.k_v
    eps0, t0 = harris_parameters(energy.c1_, energy.c2_, radius)
    eps, freq = small_noise_frequency(_noise(cfg, n), t0, cfg.alpha, n_pilot=_size(cfg, 2000, 200),
                                      n_paths=_size(cfg, 2000, 200), seed=derive_seed(seed, 7))
    manifest.add_suite("small_noise", freq > 0, eps0=eps0, t0=t0, eps=eps, frequency=freq)
    facts["small_noise"] = (f"C1 = {energy.c1_:.4g}, C2 = {energy.c2_:.4g}, R = 2 K_V = {radius:.4g}, "
                            f"eps0 = {eps0:.4g}, t0 = {t0:.4g}; eps (5% pilot quantile) = {eps:.4g}, "
                            f"frequency = {freq:.4g}")

    zero = np.zeros((2, n))
    five = parse_initial("sin1:5", n).coeffs
    mix = mixing_rate(zero, five, dyn, n_paths=_size(cfg, 10_000, 500), alpha=cfg.alpha, seed=derive_seed(seed, 8))
    frac, total = null_calibration(zero, dyn, n_paths=_size(cfg, 1000, 100), n_reps=_size(cfg, 100, 10),
                                   alpha=cfg.alpha, seed=derive_seed(seed, 9))
    mix.null_fraction = frac
    manifest.add_output(write_report(mix.rows(), out / "mixing.csv"))
    manifest.add_suite("mixing", mix.passed, gamma=mix.gamma, gamma_ci=list(mix.gamma_ci),
                       fit_points=mix.n_fit_points, null_fraction=frac, null_tests=total, censored=mix.n_censored)
    facts["mixing"] = (f"gamma* = {mix.gamma:.4g} (95% CI {mix.gamma_ci[0]:.4g}..{mix.gamma_ci[1]:.4g}) from "
                       f"{mix.n_fit_points} points; null calibration {frac:.4g} of {total} tests")

    prof = invariant_measure_profile(dyn, zero, five, n_paths=_size(cfg, 2000, 200),
                                     t_long=max(20.0, 400.0 * min(cfg.sample_scale, 1.0)), alpha=cfg.alpha,
                                     seed=derive_seed(seed, 10))
    manifest.add_output(write_report(prof.rows(), out / "invariant_measure.csv"))
    manifest.add_suite("invariant_measure", prof.birkhoff_agrees and prof.unique, ks=prof.ks,
                       critical=prof.critical)
    facts["invariant_measure"] = (f"time average {prof.time_average:.4g} +- {prof.time_se:.2g}, ensembles "
                                  f"{prof.ensemble[0][0]:.4g} and {prof.ensemble[1][0]:.4g}; KS {prof.ks:.4g} "
                                  f"vs critical {prof.critical:.4g}")

    lines = [f"Ergodicity checks, {n} modes, alpha = {cfg.alpha:g}, theta = {cfg.theta:g}, "
             f"theta' = {cfg.theta_prime:g}, seed = {seed}", ""]
    for key, title in SUMMARY_LINES:
        lines.append(f"[{'PASS' if manifest.suites[key] else 'FAIL'}] {title}")
        lines.append(f"       {facts[key]}")
    text = "\n".join(lines) + "\n"
    path = out / "summary.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    manifest.outputs[path.name] = file_digest(path)


COMMANDS = {
    "simulate": (cmd_simulate, "one trajectory to trajectory.csv"),
    "ensemble": (cmd_ensemble, "ensemble statistics of the configured observables"),
    "picard": (cmd_picard, "Picard solve of the shifted equation along one noise path"),
    "verify-subordinator": (cmd_verify_subordinator, "Laplace transform and negative-moment checks"),
    "verify-convolution": (cmd_verify_convolution, "moment scaling and quadrature oracle of the convolution"),
    "verify-picard": (cmd_verify_picard, "contraction, Lipschitz, Cole-Hopf and energy checks"),
    "gradient-check": (cmd_gradient_check, "Bismut gradient against finite differences"),
    "ergodicity": (cmd_ergodicity, "Lyapunov, coupling, strong Feller and mixing diagnostics"),
}


def manifest_name(command: str) -> str:
    return f"manifest_{command.replace('-', '_')}.json"


def run(command: str, cfg: SimConfig) -> tuple[int, RunManifest]:
    out = Path(cfg.output_path)
    manifest = RunManifest(command, cfg.snapshot(), __version__)
    code = 0
    try:
        COMMANDS[command][0](cfg, out, manifest)
    except BlowUpError as exc:
        manifest.add_suite("blowup", False, message=str(exc), time=exc.time)
        code = 3
    manifest.write(out / manifest_name(command))
    if code == 0 and not manifest.passed:
        code = 1
    return code, manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stochburgers", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, text) in COMMANDS.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="key = value configuration file")
    args = parser.parse_args(argv)
    suites = ERGODICITY_SUITES if args.command == "ergodicity" else ()
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = parse_config(text, suites=suites)
    except (ConfigError, OSError, UnicodeDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    code, manifest = run(args.command, cfg)
    for name, ok in manifest.suites.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return code


if __name__ == "__main__":
    sys.exit(main())
