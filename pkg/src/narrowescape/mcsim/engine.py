"""Configuration, execution and statistics for the Brownian-dynamics engine."""

from __future__ import annotations

import dataclasses
import hashlib
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .. import asymptotics
from ..errors import (
    InconsistentConfigs,
    InvalidInput,
    ModeMixingWarning,
    NonConvergence,
    ProjectionFailure,
    RegimeWarning,
    TooFewSurvivors,
)
from ..geometry import CircularWindow, DomainDescriptor, FaceWindow, Role, principal_curvatures
from . import kernels
from .rng import split_seed

DT_SAFETY = 0.01
DT_DEFAULT = 0.005
MIN_TRAJECTORIES = 100
MIN_SURVIVORS = 100
CHUNK = 256

Window = Union[CircularWindow, FaceWindow]


@dataclass(frozen=True)
class UniformVolume:
    """Start uniformly in the domain (rejection sampling in the bounding box)."""


@dataclass(frozen=True)
class FixedPoint:
    point: tuple[float, float, float]


@dataclass(frozen=True)
class SourceSurface:
    """Start on a boundary region with a uniform flux profile."""

    region: Window


Start = Union[UniformVolume, FixedPoint, SourceSurface]


@dataclass(frozen=True)
class SimConfig:
    """One Monte Carlo experiment.

    ``dt`` defaults to ``0.005 a_min^2 / D`` and may not exceed
    ``0.01 a_min^2 / D`` unless ``allow_large_dt`` is set. ``max_time``
    defaults to 100 times the predicted NET, or ``100 diag^2 / D`` when no
    prediction is available. ``workers`` only affects wall time.
    """

    domain: DomainDescriptor
    windows: tuple = ()
    diffusion: float = 1.0
    dt: Optional[float] = None
    trajectories: int = 1000
    seed: int = 0
    start: Start = UniformVolume()
    max_time: Optional[float] = None
    allow_large_dt: bool = False
    workers: int = 1
    debug: bool = False

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(self.windows))
        if self.domain.kind not in ("ball", "box", "polynomial"):
            raise InvalidInput(f"the simulator supports ball, box and polynomial domains, not {self.domain.kind!r}")
        D = self.diffusion
        if not (isinstance(D, (int, float)) and math.isfinite(D) and D > 0):
            raise InvalidInput(f"diffusion must be positive, got {D!r}")
        if int(self.trajectories) != self.trajectories or self.trajectories < MIN_TRAJECTORIES:
            raise InvalidInput(f"trajectories must be an integer >= {MIN_TRAJECTORIES}, got {self.trajectories}")
        try:
            split_seed(self.seed)
        except (TypeError, ValueError) as exc:
            raise InvalidInput(str(exc)) from exc
        if int(self.workers) != self.workers or self.workers < 1:
            raise InvalidInput(f"workers must be a positive integer, got {self.workers}")
        for w in self.windows:
            if isinstance(w, FaceWindow) and self.domain.kind != "box":
                raise InvalidInput("face windows need a box domain")
            if not isinstance(w, (CircularWindow, FaceWindow)):
                raise InvalidInput(f"unsupported window {w!r}")
        if isinstance(self.start, SourceSurface) and isinstance(self.start.region, FaceWindow) and self.domain.kind != "box":
            raise InvalidInput("a face source needs a box domain")
        if not isinstance(self.start, (UniformVolume, FixedPoint, SourceSurface)):
            raise InvalidInput(f"unsupported start {self.start!r}")
        if isinstance(self.start, FixedPoint):
            p = np.asarray(self.start.point, dtype=float)
            if p.shape != (3,) or self.domain.implicit_function(p) > self.domain.boundary_tol:
                raise InvalidInput(f"fixed start {self.start.point} is outside the domain")
        if self.dt is None:
            object.__setattr__(self, "dt", DT_DEFAULT * self.length_for_dt**2 / D)
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise InvalidInput(f"dt must be positive, got {self.dt}")
        limit = DT_SAFETY * self.length_for_dt**2 / D
        if self.dt > limit * (1 + 1e-12) and not self.allow_large_dt:
            raise InvalidInput(f"dt = {self.dt:g} exceeds 0.01 a_min^2/D = {limit:g}; set allow_large_dt to override")
        if self.max_time is None:
            pred = predicted_net(self)
            tmax = 100 * pred if pred is not None else 100 * self.domain.diagonal**2 / D
            object.__setattr__(self, "max_time", float(tmax))
        if not (math.isfinite(self.max_time) and self.max_time > 0):
            raise InvalidInput(f"max_time must be positive and finite, got {self.max_time}")

    @property
    def length_for_dt(self) -> float:
        """Smallest window radius, or 5% of |Omega|^(1/3) without circular windows."""
        radii = [w.radius for w in self.windows if isinstance(w, CircularWindow)]
        if isinstance(self.start, SourceSurface) and isinstance(self.start.region, CircularWindow):
            radii.append(self.start.region.radius)
        return min(radii) if radii else 0.05 * self.domain.length_scale

    def signature(self, include_dt: bool = True) -> str:
        """Hash of everything that determines the results (not ``workers``/``debug``)."""
        d = self.domain
        parts = [
            d.kind, repr(sorted((k, np.asarray(v).tolist()) for k, v in d.params.items())),
            repr(d.bounding_box), repr(self.windows), repr(self.diffusion),
            repr(self.trajectories), repr(self.seed), repr(self.start), repr(self.max_time),
        ]
        if include_dt:
            parts.append(repr(self.dt))
        return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class EscapeStats:
    """Summary of a batch of trajectories.

    Mean and variance are over absorbed trajectories; ``std_error`` is
    ``sqrt(variance / absorbed)``, which is ``sqrt(variance / n)`` whenever
    nothing is censored.
    """

    n: int
    mean_fpt: float
    variance: float
    std_error: float
    per_window_counts: dict
    censored: int
    dt_used: float
    max_time: float = math.inf
    signature: str = ""
    times: np.ndarray = field(default=None, repr=False, compare=False)
    window_ids: np.ndarray = field(default=None, repr=False, compare=False)
    steps: int = 0
    violations: int = 0

    @classmethod
    def from_samples(cls, times, window_ids, dt, max_time=math.inf, signature="", steps=0, violations=0):
        times = np.asarray(times, dtype=float)
        wid = np.asarray(window_ids, dtype=np.int64)
        if times.shape != wid.shape:
            raise InvalidInput("times and window ids must have the same length")
        hit = wid >= 0
        m = int(hit.sum())
        mean = float(times[hit].mean()) if m else math.nan
        var = float(times[hit].var(ddof=1)) if m > 1 else math.nan
        ids, counts = np.unique(wid[hit], return_counts=True)
        return cls(
            n=int(times.size),
            mean_fpt=mean,
            variance=var,
            std_error=math.sqrt(var / m) if m > 1 else math.nan,
            per_window_counts={int(i): int(c) for i, c in zip(ids, counts)},
            censored=int(times.size - m),
            dt_used=float(dt),
            max_time=float(max_time),
            signature=signature,
            times=times,
            window_ids=wid,
            steps=int(steps),
            violations=int(violations),
        )


@dataclass(frozen=True)
class Extrapolated:
    value: float
    std_error: float


@dataclass(frozen=True)
class LeakageResult:
    """Capture fractions by window id, with binomial standard errors."""

    fractions: dict
    std_errors: dict
    censored_fraction: float
    fluxes: dict
    roles: dict
    stats: EscapeStats = field(repr=False, compare=False)

    def role_fraction(self, role: Role | str) -> float:
        role = Role(role)
        return float(sum(f for w, f in self.fractions.items() if self.roles[w] == role))

    def role_std_error(self, role: Role | str) -> float:
        p = self.role_fraction(role)
        return math.sqrt(p * (1 - p) / self.stats.n)


# -------------------------------------------------------------- predictions


def predicted_net(config: SimConfig) -> Optional[float]:
    """Small-window NET for the configured windows (escape rates add), or None."""
    caps = [w for w in config.windows if isinstance(w, CircularWindow)]
    if not caps or len(caps) != len(config.windows):
        return None
    d = config.domain
    rate = 0.0
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RegimeWarning)
            for w in caps:
                if d.kind == "ball":
                    e = asymptotics.net_ball(d.params["R"], w.radius, config.diffusion)
                elif d.kind == "box":
                    e = asymptotics.net_general(d.volume, w.radius, config.diffusion, 0.0)
                else:
                    k = principal_curvatures(d, w.center)
                    e = asymptotics.net_general(d.volume, w.radius, config.diffusion, k.sum)
                rate += 1.0 / e.value
    except (InvalidInput, ArithmeticError, ValueError):
        return None
    return 1.0 / rate


# ---------------------------------------------------------------- execution


def _gradient_bound(domain: DomainDescriptor) -> float:
    lo, hi = (np.asarray(c, dtype=float) for c in domain.bounding_box)
    axes = [np.linspace(lo[i], hi[i], 17) for i in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    g = max(float(np.linalg.norm(domain.gradient(p))) for p in pts)
    return 1.5 * g


def _pack(config: SimConfig):
    d = config.domain
    gp = np.zeros(14)
    coef = np.zeros(1)
    exps = np.zeros((1, 3), dtype=np.int64)
    if d.kind == "ball":
        kind = kernels.KIND_BALL
        gp[0] = d.params["R"]
    elif d.kind == "box":
        kind = kernels.KIND_BOX
        gp[0:3] = d.params["L"]
    else:
        kind = kernels.KIND_POLY
        coef = np.asarray(d.params["coef"], dtype=float)
        exps = np.ascontiguousarray(d.params["exps"], dtype=np.int64)
        gp[6] = _gradient_bound(d)
    gp[7] = d.boundary_tol
    gp[8:11], gp[11:14] = d.bounding_box

    caps = [(i, w) for i, w in enumerate(config.windows) if isinstance(w, CircularWindow)]
    faces = [(i, w) for i, w in enumerate(config.windows) if isinstance(w, FaceWindow)]
    cap_c = np.array([w.center for _, w in caps], dtype=float).reshape(-1, 3)
    cap_n = np.array([w.normal for _, w in caps], dtype=float).reshape(-1, 3)
    cap_t1 = np.array([w.tangent_frame[0] for _, w in caps], dtype=float).reshape(-1, 3)
    cap_t2 = np.array([w.tangent_frame[1] for _, w in caps], dtype=float).reshape(-1, 3)
    cap_a = np.array([w.radius for _, w in caps], dtype=float)
    cap_id = np.array([i for i, _ in caps], dtype=np.int64)
    face_axis = np.array([w.axis for _, w in faces], dtype=np.int64)
    face_upper = np.array([w.upper for _, w in faces], dtype=np.bool_)
    face_id = np.array([i for i, _ in faces], dtype=np.int64)

    sd = np.zeros(13)
    s = config.start
    if isinstance(s, UniformVolume):
        mode = kernels.START_UNIFORM
    elif isinstance(s, FixedPoint):
        mode = kernels.START_FIXED
        sd[:3] = s.point
    elif isinstance(s.region, FaceWindow):
        mode = kernels.START_FACE
        sd[0] = s.region.axis
        sd[1] = 1.0 if s.region.upper else 0.0
    else:
        mode = kernels.START_CAP
        r = s.region
        sd[0:3] = r.center
        sd[3:6] = r.tangent_frame[0]
        sd[6:9] = r.tangent_frame[1]
        sd[9:12] = r.normal
        sd[12] = r.radius
    k0, k1 = split_seed(config.seed)
    return (k0, k1, kind, gp, coef, exps, cap_c, cap_n, cap_t1, cap_t2, cap_a, cap_id,
            face_axis, face_upper, face_id, mode, sd)


def _check_status(status: np.ndarray):
    bad = np.flatnonzero(status == kernels.STATUS_PROJECTION)
    if bad.size:
        raise ProjectionFailure(
            f"{bad.size} trajectories could not be reflected back inside (first index {bad[0]}); reduce dt"
        )
    bad = np.flatnonzero(status == kernels.STATUS_START)
    if bad.size:
        raise NonConvergence(f"could not place the start point of trajectory {bad[0]}")


def simulate(config: SimConfig) -> EscapeStats:
    """Run every trajectory of ``config``; chunks go to a thread pool of ``config.workers``."""
    packed = _pack(config)
    n = int(config.trajectories)
    out_t = np.empty(n)
    out_w = np.empty(n, dtype=np.int64)
    out_steps = np.empty(n, dtype=np.int64)
    out_viol = np.empty(n, dtype=np.int64)
    out_status = np.empty(n, dtype=np.int8)

    def work(lo):
        kernels.run_block(
            lo, min(lo + CHUNK, n), *packed, float(config.dt), float(config.diffusion),
            float(config.max_time), bool(config.debug),
            out_t, out_w, out_steps, out_viol, out_status,
        )

    starts = range(0, n, CHUNK)
    if config.workers == 1:
        for lo in starts:
            work(lo)
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            list(pool.map(work, starts))
    _check_status(out_status)
    return EscapeStats.from_samples(
        out_t, out_w, config.dt, config.max_time, config.signature(include_dt=False),
        steps=out_steps.sum(), violations=out_viol.sum(),
    )


def sample_first_passage(config: SimConfig, trajectory_index: int):
    """``(fpt, window id)`` of one trajectory, ``(None, None)`` if censored."""
    if not 0 <= trajectory_index < 2**63:
        raise InvalidInput(f"trajectory index out of range: {trajectory_index}")
    packed = _pack(config)
    t, w, _, _, status = kernels.trajectory(
        trajectory_index, *packed, float(config.dt), float(config.diffusion),
        float(config.max_time), bool(config.debug),
    )
    _check_status(np.array([status]))
    if w < 0:
        return None, None
    return float(t), int(w)


# ------------------------------------------------------------------ analyses


def estimate_net(config: SimConfig) -> EscapeStats:
    if not config.windows:
        raise InvalidInput("estimate_net needs at least one window")
    for w in config.windows:
        if w.role != Role.ESCAPE:
            raise InvalidInput(f"estimate_net needs escape windows only, got role {w.role.value!r}")
    return simulate(config)


def richardson_extrapolate(stats_dt: EscapeStats, stats_dt_half: EscapeStats) -> Extrapolated:
    """Remove an ``O(sqrt(dt))`` bias: ``m* = m2 + (m2 - m1) / (sqrt(2) - 1)``."""
    _check_pair(stats_dt, stats_dt_half)
    return _richardson(stats_dt.mean_fpt, stats_dt.std_error, stats_dt_half.mean_fpt, stats_dt_half.std_error)


def _check_pair(s1: EscapeStats, s2: EscapeStats):
    if not math.isclose(s2.dt_used, 0.5 * s1.dt_used, rel_tol=1e-9):
        raise InconsistentConfigs(f"second dt {s2.dt_used:g} is not half of {s1.dt_used:g}")
    if s1.signature != s2.signature:
        raise InconsistentConfigs("the two runs differ in more than dt")


def _richardson(m1, e1, m2, e2) -> Extrapolated:
    c = 1.0 / (math.sqrt(2.0) - 1.0)
    value = m2 + (m2 - m1) * c
    err = math.sqrt(((1 + c) * e2) ** 2 + (c * e1) ** 2)
    return Extrapolated(value, err)


def fit_survival_rate(stats: EscapeStats, fit_window: tuple[float, float], predicted_net: Optional[float] = None):
    """Decay rate of the survival fraction on ``[t_lo, t_hi]``.

    Maximum likelihood for an exponential tail observed on a window:
    ``lambda = events / time at risk``, where events are absorptions inside
    the window and time at risk sums ``min(T, t_hi) - t_lo`` over walkers
    alive at ``t_lo``. The standard error is ``lambda / sqrt(events)``.
    """
    t_lo, t_hi = (float(v) for v in fit_window)
    if not (0 <= t_lo < t_hi):
        raise InvalidInput(f"fit window must satisfy 0 <= t_lo < t_hi, got {fit_window}")
    if t_hi > stats.max_time:
        raise InvalidInput(f"t_hi = {t_hi:g} exceeds max_time = {stats.max_time:g}")
    if predicted_net is not None and t_lo < predicted_net:
        warnings.warn(
            f"fit window starts at {t_lo:g}, before the predicted NET {predicted_net:g}; higher modes may bias the slope",
            ModeMixingWarning, stacklevel=2,
        )
    T = np.where(stats.window_ids >= 0, stats.times, stats.max_time)
    alive = T > t_lo
    if int(alive.sum()) < MIN_SURVIVORS:
        raise TooFewSurvivors(f"only {int(alive.sum())} trajectories alive at t = {t_lo:g}; need {MIN_SURVIVORS}")
    events = int(np.sum(alive & (stats.window_ids >= 0) & (T <= t_hi)))
    exposure = float(np.sum(np.minimum(T[alive], t_hi) - t_lo))
    if events == 0:
        raise TooFewSurvivors(f"no absorptions inside the fit window {fit_window}")
    lam = events / exposure
    return lam, lam / math.sqrt(events)


def estimate_survival_rate(config: SimConfig, fit_window: tuple[float, float]):
    stats = estimate_net(config)
    return fit_survival_rate(stats, fit_window, predicted_net(config))


def leakage_experiment(config: SimConfig, injection_rate: float = 1.0) -> LeakageResult:
    """Capture fractions for particles injected on a source region.

    ``fluxes`` are fractions times ``injection_rate`` (particles per unit
    time entering through the source).
    """
    if not isinstance(config.start, SourceSurface):
        raise InvalidInput("leakage_experiment needs a source_surface start")
    roles = [w.role for w in config.windows]
    if Role.TARGET not in roles or Role.LEAK not in roles:
        raise InvalidInput("leakage_experiment needs at least one target and one leak window")
    if Role.ESCAPE in roles:
        raise InvalidInput("escape windows are not allowed in a leakage experiment")
    stats = simulate(config)
    n = stats.n
    frac = {i: stats.per_window_counts.get(i, 0) / n for i in range(len(config.windows))}
    return LeakageResult(
        fractions=frac,
        std_errors={i: math.sqrt(p * (1 - p) / n) for i, p in frac.items()},
        censored_fraction=stats.censored / n,
        fluxes={i: p * injection_rate for i, p in frac.items()},
        roles={i: w.role for i, w in enumerate(config.windows)},
        stats=stats,
    )


def extrapolate_fraction(r_dt: LeakageResult, r_dt_half: LeakageResult, role: Role | str = Role.LEAK) -> Extrapolated:
    """Richardson-extrapolated total capture fraction of the windows with ``role``."""
    _check_pair(r_dt.stats, r_dt_half.stats)
    return _richardson(
        r_dt.role_fraction(role), r_dt.role_std_error(role),
        r_dt_half.role_fraction(role), r_dt_half.role_std_error(role),
    )


def extrapolate_rate(stats_dt: EscapeStats, stats_dt_half: EscapeStats, fit_window: tuple[float, float],
                     predicted_net: Optional[float] = None) -> Extrapolated:
    """Survival decay rate from two step sizes, Richardson-extrapolated like the mean."""
    _check_pair(stats_dt, stats_dt_half)
    l1, e1 = fit_survival_rate(stats_dt, fit_window, predicted_net)
    l2, e2 = fit_survival_rate(stats_dt_half, fit_window, predicted_net)
    return _richardson(l1, e1, l2, e2)


def halved(config: SimConfig) -> SimConfig:
    return dataclasses.replace(config, dt=0.5 * config.dt)
