"""Cross-validation harness: formulas against solvers against Monte Carlo.

Each ``criterion_*`` function runs one experiment and returns report rows.
The ``full`` scale reproduces the acceptance settings; ``quick`` shrinks
the Monte Carlo runs to seconds (its statistical rows may then fail).
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import asymptotics, geometry, greens, helmholtz
from .errors import RegimeWarning
from .mcsim import engine

BALL_NET_REFERENCE = asymptotics.net_ball(1.0, 0.1, 1.0).value
BALL_NET_LEADING = asymptotics.net_ball(1.0, 0.1, 1.0).leading


@dataclass(frozen=True)
class Scale:
    name: str
    ball_trajectories: int
    leak_trajectories: int
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)


SCALES = {
    "full": Scale("full", 100_000, 1_000_000),
    "quick": Scale("quick", 1_000, 20_000),
}


@dataclass(frozen=True)
class ValidationRow:
    """One comparison. ``passed`` is ``|relative_error| <= tolerance`` for
    numeric rows; rows with ``kind="check"`` carry a boolean outcome and
    report the compared quantity in ``computed``."""

    experiment: str
    reference: float
    provenance: str
    computed: float
    relative_error: float
    tolerance: float
    passed: bool
    kind: str = "relative"


def relative_row(experiment, reference, provenance, computed, tolerance) -> ValidationRow:
    rel = (computed - reference) / abs(reference) if reference != 0 else computed - reference
    return ValidationRow(experiment, float(reference), provenance, float(computed), float(rel),
                         float(tolerance), bool(abs(rel) <= tolerance))


def check_row(experiment, reference, provenance, computed, passed) -> ValidationRow:
    return ValidationRow(experiment, float(reference), provenance, float(computed), math.nan,
                         math.nan, bool(passed), kind="check")


@dataclass(frozen=True)
class ValidationReport:
    rows: list
    suite: str
    seed: int

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def with_tolerance(self, tol: float) -> "ValidationReport":
        rows = [
            replace(r, tolerance=tol, passed=abs(r.relative_error) <= tol) if r.kind == "relative" else r
            for r in self.rows
        ]
        return replace(self, rows=rows)


# ----------------------------------------------------------------- criteria


def criterion_1_patch() -> list:
    rows = []
    for k1, k2 in [(1.0, 1.0), (1.0, 0.0), (2.0, 1.0)]:
        fit, _ = greens.patch_log_slope(greens.PatchSpec(k1, k2, 0.1))
        rows.append(relative_row(f"patch-slope k=({k1:g},{k2:g})", (k1 + k2) / (8 * math.pi),
                                 "(k1+k2)/(8 pi)", fit.slope, 0.05))
    return rows


def ball_pde_residual(R: float = 1.0, samples: int = 50, seed: int = 0) -> float:
    """Worst relative deviation of the 6-point Laplacian of N(., y) from 1/|Omega|."""
    rng = np.random.default_rng(seed)
    y = np.array([0.0, 0.0, 0.5 * R])
    h = 2e-4 * R
    target = 1.0 / (4 * math.pi * R**3 / 3)
    worst = 0.0
    count = 0
    while count < samples:
        x = rng.uniform(-R, R, 3)
        if np.linalg.norm(x) > 0.9 * R or np.linalg.norm(x - y) < 0.2 * R:
            continue
        lap = -6 * greens.neumann_ball(x, y, R)
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            lap += greens.neumann_ball(x + e, y, R) + greens.neumann_ball(x - e, y, R)
        worst = max(worst, abs(lap / h**2 - target) / target)
        count += 1
    return worst


def ball_boundary_residual(R: float = 1.0, samples: int = 50, seed: int = 0) -> float:
    """Largest one-sided normal derivative of N(., y) on the sphere, |y| = R/2."""
    rng = np.random.default_rng(seed)
    y = np.array([0.3, -0.2, math.sqrt(0.25 - 0.13)]) * R
    h = 1e-5 * R
    worst = 0.0
    for _ in range(samples):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        z = R * n
        # second-order one-sided difference along the inward normal
        f0 = greens.neumann_ball(z, y, R)
        f1 = greens.neumann_ball(z - h * n, y, R)
        f2 = greens.neumann_ball(z - 2 * h * n, y, R)
        worst = max(worst, abs((3 * f0 - 4 * f1 + f2) / (2 * h)))
    return worst


def criterion_2_ball() -> list:
    fit = greens.boundary_log_coefficient_ball(1.0, truncation=64)
    pde = ball_pde_residual()
    bc = ball_boundary_residual()
    return [
        relative_row("ball-log-slope R=1", 1 / (4 * math.pi), "1/(4 pi R)", fit.slope, 0.02),
        check_row("ball-pde-residual", 1e-3, "Laplacian = 1/|Omega|", pde, pde < 1e-3),
        check_row("ball-normal-derivative", 1e-4, "zero Neumann data", bc, bc < 1e-4),
    ]


def criterion_3_capacitance() -> list:
    rows = []
    for a, C in [(1.0, 1.0), (0.5, 1.0), (0.01, 3.0)]:
        F = helmholtz.total_flux(helmholtz.solve_disk(helmholtz.HelmholtzProblem(a, 0.0, -C, 16)))
        rows.append(relative_row(f"disk-capacitance a={a:g} C={C:g}", -4 * C * a, "-4 C a", F, 1e-6))
    return rows


def criterion_4_solver() -> list:
    V = 4 * math.pi / 3
    ell = V ** (1 / 3)
    rows = []
    errs = []
    for a in (0.03, 0.01):
        ref = asymptotics.net_ball(1.0, a, 1.0).value
        rows.append(relative_row(f"solver-net a={a:g}", ref, "net_ball", helmholtz.net_from_solver(V, a, 1.0, 2.0), 0.01))
        a_s, k_s = a / ell, 2.0 * ell
        r = helmholtz.analytic_g1_ratio(a_s, k_s)
        row = relative_row(f"g1-ratio a={a:g}", r, "(k/2pi) a log a", helmholtz.flux_perturbation(a_s, k_s), 0.10)
        rows.append(row)
        errs.append(abs(row.relative_error))
    rows.append(check_row("g1-ratio improves a=0.03->0.01", errs[0], "monotone in a", errs[1], errs[1] < errs[0]))
    return rows


def ball_escape_runs(scale: Scale, seed: int):
    """The shared ball experiment: a = 0.1, uniform start, dt = 0.01 a^2 and dt/2."""
    B = geometry.ball(1.0)
    w = geometry.make_window(B, (0.0, 0.0, 1.0), 0.1)
    cfg = engine.SimConfig(B, [w], 1.0, dt=0.01 * 0.1**2, trajectories=scale.ball_trajectories,
                           seed=seed, workers=scale.workers)
    return engine.estimate_net(cfg), engine.estimate_net(engine.halved(cfg))


def criterion_5_net(runs) -> list:
    ext = engine.richardson_extrapolate(*runs)
    ref, lead = BALL_NET_REFERENCE, BALL_NET_LEADING
    closer = abs(ext.value - ref) < abs(ext.value - lead)
    return [
        relative_row("mc-net ball a=0.1", ref, "net_ball", ext.value, 0.05),
        check_row("mc-net closer to corrected than leading", ref, "net_ball vs |Omega|/(4aD)", ext.value, closer),
    ]


def survival_window(net: float = BALL_NET_REFERENCE) -> tuple[float, float]:
    return net, 4 * net


def extrapolated_rate(runs, fit_window=None):
    return engine.extrapolate_rate(*runs, fit_window or survival_window(), BALL_NET_REFERENCE)


def criterion_6_eigenvalue(runs) -> list:
    ext = extrapolated_rate(runs)
    return [relative_row("mc-eigenvalue ball a=0.1", 1 / BALL_NET_REFERENCE, "1/net_ball", ext.value, 0.10)]


def leakage_runs(heights, scale: Scale, seed: int, eps: float = 0.02):
    C = geometry.box(1.0, 1.0, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        wins = [geometry.face_window(C, "-z", "target")]
        wins += [geometry.make_window(C, (0.0, 0.5, h), eps, "leak") for h in heights]
    cfg = engine.SimConfig(
        C, wins, 1.0, dt=0.01 * eps**2, trajectories=scale.leak_trajectories, seed=seed,
        start=engine.SourceSurface(geometry.face_window(C, "+z", "target")), max_time=50.0,
        workers=scale.workers,
    )
    return engine.leakage_experiment(cfg), engine.leakage_experiment(engine.halved(cfg))


def criterion_7_leakage(scale: Scale, seed: int, eps: float = 0.02) -> list:
    single = leakage_runs([0.5], scale, seed + 1, eps)
    pair = leakage_runs([0.25, 0.75], scale, seed + 2, eps)
    return leakage_rows(single, pair, eps)


def leakage_rows(single, pair, eps: float = 0.02) -> list:
    """Rows for one leak at h = 0.5 and two leaks at h = 0.25, 0.75, each given as a (dt, dt/2) pair."""
    ext1 = engine.extrapolate_fraction(*single)
    ref1 = 4 * eps * 0.5
    ext2 = engine.extrapolate_fraction(*pair)
    ref2 = 4 * eps * (0.25 + 0.75)
    return [
        relative_row("leak-fraction h=0.5 (3 SE)", ref1, "4 eps h", ext1.value, 3 * ext1.std_error / ref1),
        relative_row("leak-fraction h=0.5 (10%)", ref1, "4 eps h", ext1.value, 0.10),
        relative_row("leak-fraction h=0.25+0.75 (3 SE)", ref2, "4 eps sum h", ext2.value, 3 * ext2.std_error / ref2),
    ]


def criterion_8_properties(seed: int) -> list:
    rows = []
    # scaling covariance of the NET formula
    base = asymptotics.net_general(2.0, 0.05, 1.3, 1.7).value
    worst = max(
        abs(asymptotics.net_general(s**3 * 2.0, s * 0.05, 1.3, 1.7 / s).value / (s**2 * base) - 1)
        for s in (0.5, 2.0, 3.7)
    )
    rows.append(check_row("net-scaling-covariance", 1e-12, "s^2 scaling", worst, worst <= 1e-12))

    # planted log slope
    d = np.logspace(-4, -2, 9)
    fit = greens.fit_log_slope(d, 0.3 * np.log(1 / d) - 1.25)
    rows.append(check_row("planted-log-slope", 0.3, "synthetic", fit.slope,
                          abs(fit.slope - 0.3) < 1e-12 and fit.residual < 1e-12))

    # planted exponential rate
    rng = np.random.default_rng(seed)
    T = rng.exponential(0.5, 20_000)
    stats = engine.EscapeStats.from_samples(T, np.zeros(T.size, dtype=np.int64), 1e-3, max_time=100.0)
    lam, se = engine.fit_survival_rate(stats, (0.0, 2.0))
    rows.append(check_row("planted-exponential-rate", 2.0, "synthetic", lam, abs(lam - 2.0) <= 3 * se))

    # solver grid convergence
    flux = [helmholtz.total_flux(helmholtz.solve_disk(helmholtz.HelmholtzProblem(0.05, -0.1, -1.0, n)))
            for n in (8, 16, 32)]
    d1, d2 = abs(flux[1] - flux[0]), abs(flux[2] - flux[1])
    roundoff = 1e-12 * abs(flux[2])
    order = math.log2(d1 / d2) if d2 > roundoff else math.inf
    rows.append(check_row("solver-grid-convergence", 1.5, "order >= 1.5", order, order >= 1.5 or d1 <= roundoff))

    # determinism and conservation in the simulator
    B = geometry.ball(1.0)
    w = geometry.make_window(B, (0.0, 0.0, 1.0), 0.1)
    cfg = engine.SimConfig(B, [w], 1.0, trajectories=200, seed=seed)
    runs = [engine.simulate(replace(cfg, workers=k)) for k in (1, 4, 16)]
    same = all(np.array_equal(r.times, runs[0].times) and np.array_equal(r.window_ids, runs[0].window_ids) for r in runs)
    rows.append(check_row("mc-determinism workers 1/4/16", 1.0, "bitwise", float(same), same))
    s = runs[0]
    total = sum(s.per_window_counts.values()) + s.censored
    rows.append(check_row("mc-conservation", s.n, "counts + censored = n", total, total == s.n))
    return rows


# --------------------------------------------------------------------- suite


def run_validation(suite: str = "quick", seed: int = 1, tolerance_override: Optional[float] = None,
                   progress: Optional[Callable[[str], None]] = None) -> ValidationReport:
    """Run criteria 1-8 at the requested scale. Row failures never abort the suite."""
    if suite not in SCALES:
        raise ValueError(f"suite must be one of {sorted(SCALES)}, got {suite!r}")
    scale = SCALES[suite]
    say = progress or (lambda msg: None)
    rows = []

    def guarded(name, fn):
        say(name)
        try:
            rows.extend(fn())
        except Exception as exc:  # a crashing experiment becomes a failed row
            rows.append(check_row(f"{name} ({type(exc).__name__}: {exc})", math.nan, "error", math.nan, False))

    guarded("criterion 1: patch log slope", criterion_1_patch)
    guarded("criterion 2: ball Neumann function", criterion_2_ball)
    guarded("criterion 3: disk capacitance", criterion_3_capacitance)
    guarded("criterion 4: solver NET", criterion_4_solver)
    say("criteria 5-6: ball Monte Carlo")
    try:
        runs = ball_escape_runs(scale, seed)
    except Exception as exc:
        runs = None
        rows.append(check_row(f"ball Monte Carlo ({type(exc).__name__}: {exc})", math.nan, "error", math.nan, False))
    if runs is not None:
        guarded("criterion 5: NET", lambda: criterion_5_net(runs))
        guarded("criterion 6: eigenvalue", lambda: criterion_6_eigenvalue(runs))
    guarded("criterion 7: leakage", lambda: criterion_7_leakage(scale, seed))
    guarded("criterion 8: properties", lambda: criterion_8_properties(seed))
    report = ValidationReport(rows, suite, seed)
    if tolerance_override is not None:
        report = report.with_tolerance(tolerance_override)
    return report
