"""Acceptance criteria 1-13 at full size.  Each test prints one CRITERION line."""
import math
import time

import numpy as np
import pytest

from stochburgers.cli import COMMANDS, manifest_name, run
from stochburgers.config import parse_config
from stochburgers.deterministic import local_time, verify_picard
from stochburgers.diagnostics import coupling_contraction, lyapunov_drift, mixing_rate, null_calibration, shaped_initial
from stochburgers.noise import verify_convolution_moments, verify_convolution_oracle
from stochburgers.nonlinearity import bilinear_coeffs
from stochburgers.rng import make_rng
from stochburgers.sensitivity import gradient_check
from stochburgers.spde import Dynamics
from stochburgers.spectral import NoiseIntensity, inner_coeffs, sobolev_norm_coeffs, wavenumbers
from stochburgers.subordinator import verify_subordinator

pytestmark = pytest.mark.acceptance
SQ = math.sqrt(math.pi)


@pytest.fixture(scope="module")
def picard_report():
    start = time.perf_counter()
    rep = verify_picard()
    return rep, time.perf_counter() - start


def test_c01_energy_neutrality(criterion):
    worst = 0.0
    rng = np.random.default_rng(1)
    for n in (8, 32, 64):
        k = wavenumbers(n)
        c = rng.standard_normal((1000, 2, n)) * k ** -rng.uniform(0, 2, (1000, 1, 1))
        ratio = np.abs(inner_coeffs(bilinear_coeffs(c, c), c)) / sobolev_norm_coeffs(c, 1.0) ** 3
        worst = max(worst, float(ratio.max()))
    ok = worst < 1e-12
    criterion(1, ok, f"max |<B(u,u),u>|/||u||_1^3 = {worst:.3g} (< 1e-12)")
    assert ok


@pytest.fixture(scope="module")
def subordinator_report():
    return verify_subordinator()


def test_c02_laplace_transform(criterion, subordinator_report):
    rows = [r for r in subordinator_report.records if r["test"] == "laplace"]
    worst = max(abs(r["estimate"] - r["target"]) / r["stderr"] for r in rows)
    ok = all(r["pass"] for r in rows)
    criterion(2, ok, f"{len(rows)} cells, worst deviation {worst:.2f} standard errors (<= 3)")
    assert ok


def test_c03_negative_moment_slope(criterion, subordinator_report):
    row = next(r for r in subordinator_report.records if r["test"] == "negative_moment_slope")
    ok = abs(row["estimate"] - row["target"]) <= 0.1
    criterion(3, ok, f"slope {row['estimate']:.4f} vs {row['target']:.4f} (+-0.1)")
    assert ok


def test_c04_convolution_moment_scaling(criterion):
    rep = verify_convolution_moments(NoiseIntensity(16), 1.5, 2.0 ** np.arange(-8, -2), p=1.0, theta=0.5,
                                     n_paths=10_000)
    ok = abs(rep.fitted_slope - 1 / 1.5) <= 0.15
    criterion(4, ok, f"slope {rep.fitted_slope:.4f} vs {1 / 1.5:.4f} (+-0.15)")
    assert ok


def test_c05_convolution_oracle(criterion):
    rep = verify_convolution_oracle(NoiseIntensity(16), 1.5, steps=(1e-2, 5e-3, 2.5e-3), n_paths=1000)
    trend = np.all(rep.errors <= 5 * rep.steps / rep.steps.min() * rep.errors.min())
    ok = rep.order >= 1.0 and bool(trend)
    criterion(5, ok, "relative errors " + ", ".join(f"{e:.3g}" for e in rep.errors)
              + f", measured order {rep.order:.3f} (>= 1)")
    assert ok


def test_c06_picard_contraction(criterion, picard_report):
    rep, _ = picard_report
    ok = rep.checks()["contraction"]
    n = sum(r["check"] == "contraction" for r in rep.records)
    criterion(6, ok, f"max factor {rep.worst('contraction'):.4f} over {n} pairs, R = 0.5, T(R) = {rep.local.T:.4g}"
              " (<= 0.55)")
    assert ok


def test_c07_lipschitz_in_data(criterion, picard_report):
    rep, _ = picard_report
    lip = rep.checks()["lipschitz"]
    n = 16
    rng = make_rng(0, 2)
    phi1 = shaped_initial(0.5, n, rng)
    dp = rng.standard_normal((2, n))
    phi2 = phi1 + 0.1 * dp / np.linalg.norm(dp)
    coup = coupling_contraction(phi1, phi2, Dynamics(NoiseIntensity(n)), [0.1, local_time(1.0, n).T], 1.0,
                                n_paths=2000, seed=3)
    ok = lip and coup.passed
    criterion(7, ok, f"max Lipschitz ratio {rep.worst('lipschitz'):.4f} (<= 2.1); pointwise H1 form holds on "
              + ", ".join(f"{f:.4f}" for f in coup.fraction_ok) + f" of {coup.n_omega} Omega_R paths (>= 0.99)")
    assert ok


def test_c08_cole_hopf(criterion, picard_report):
    rep, _ = picard_report
    ok = rep.checks()["cole_hopf"]
    criterion(8, ok, f"max sup_t ||w - w_CH||_0 = {rep.worst('cole_hopf'):.3g} at 64 modes (< 1e-6)")
    assert ok


def test_c09_energy_inequality(criterion, picard_report):
    rep, _ = picard_report
    checks = rep.checks()
    ok = checks["energy"] and checks["energy_free"]
    c1, c2 = rep.energy_constants
    criterion(9, ok, f"C1 = {c1:.4g}, C2 = {c2:.4g}; worst validation score {rep.worst('energy'):.4f} (<= 1); "
              f"noise-free ratio {rep.worst('energy_free'):.12f} (<= 1)")
    assert ok


def test_c10_bismut_vs_fd(criterion):
    def phi_of_n(n):
        c = np.zeros((2, n))
        c[1, 0] = 0.1 * SQ
        return c

    rows = gradient_check(lambda n: Dynamics(NoiseIntensity(n), "truncated", 1.0), phi_of_n,
                          n_modes=(2, 4), times=(0.25, 0.5, 1.0), n_samples=100_000)
    worst = max(abs(r.bismut - r.fd) / math.hypot(r.bismut_se, r.fd_se) for r in rows)
    ok = all(r.passed for r in rows)
    criterion(10, ok, f"{sum(r.passed for r in rows)}/{len(rows)} cells agree, worst {worst:.2f} sigma (<= 3)")
    assert ok


def test_c11_lyapunov_drift(criterion):
    rep = lyapunov_drift(Dynamics(NoiseIntensity(8)), n_paths=500, n_heldout=20)
    ok = rep.passed
    held = int(np.sum(np.all(rep.heldout_ok, axis=1)))
    criterion(11, ok, f"rate {rep.rate:.4g} (CI {rep.rate_ci[0]:.4g}..{rep.rate_ci[1]:.4g}), "
              f"held-out {held}/{len(rep.heldout_ok)}")
    assert ok


def test_c12_mixing(criterion):
    n = 8
    dyn = Dynamics(NoiseIntensity(n))
    zero = np.zeros((2, n))
    five = zero.copy()
    five[1, 0] = 5 * SQ
    rep = mixing_rate(zero, five, dyn, n_paths=10_000, t_end=20.0)
    frac, total = null_calibration(zero, dyn, n_paths=1000, n_reps=100, seed=9)
    rep.null_fraction = frac
    ok = rep.passed
    criterion(12, ok, f"gamma* {rep.gamma:.4g} (CI {rep.gamma_ci[0]:.4g}..{rep.gamma_ci[1]:.4g}, "
              f"{rep.n_fit_points} points); null calibration {frac:.4f} of {total}")
    assert ok


def _suite_bytes(root, monkeypatch, workers):
    monkeypatch.chdir(root)
    monkeypatch.setenv("STOCHBURGERS_WORKERS", str(workers))
    cfg = parse_config("n_modes = 8\nsample_scale = 0.02\nt_end = 0.5\ndt = 0.005\nensemble_size = 200\n"
                       "seed = 11\noutput_path = out\n", suites=("ergodicity",))
    codes = {}
    for command in COMMANDS:
        codes[command], _ = run(command, cfg)
    files = {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted((root / "out").iterdir())}
    return codes, files


def test_c13_reproducibility(criterion, tmp_path, monkeypatch):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    codes_a, files_a = _suite_bytes(a, monkeypatch, 1)
    codes_b, files_b = _suite_bytes(b, monkeypatch, 2)
    differ = [k for k in files_a if files_a[k] != files_b.get(k)]
    ok = codes_a == codes_b and set(files_a) == set(files_b) and not differ
    ok = ok and all(f"out/{manifest_name(c)}" in files_a for c in COMMANDS)
    criterion(13, ok, f"{len(files_a)} report files from {len(COMMANDS)} subcommands byte-identical across two runs"
              + (f"; differing: {differ}" if differ else ""))
    assert ok
