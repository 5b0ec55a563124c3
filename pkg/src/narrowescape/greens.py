"""Logarithmic boundary singularity of the Neumann function.

Two independent numerical routes to the coefficient of ``ln(1/|y - z|)``:

* :func:`patch_v0` integrates the most singular part of the double-layer
  correction over a quadratic surface patch with principal curvatures
  ``(kappa1, kappa2)``; :func:`fit_log_slope` extracts the coefficient, which
  should approach ``(kappa1 + kappa2) / (8 pi)``.
* :func:`neumann_ball` is the Neumann function of a ball (free-space kernel
  plus a harmonic correction in Legendre polynomials), whose boundary
  coefficient should be ``1 / (4 pi R)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import IllConditioned, InvalidInput, QuadratureFailure, TruncationWarning

PATCH_RTOL = 1e-6
PATCH_MAX_REFINEMENTS = 8
DEFAULT_OFFSETS = tuple(np.logspace(-4, -2, 9))
TRUNCATION_RTOL = 1e-8


@dataclass(frozen=True)
class PatchSpec:
    kappa1: float
    kappa2: float
    patch_radius: float
    probe_offsets: tuple[float, ...] = field(default=DEFAULT_OFFSETS)

    def __post_init__(self):
        if not self.patch_radius > 0:
            raise InvalidInput(f"patch radius must be positive, got {self.patch_radius}")
        offs = np.asarray(self.probe_offsets, dtype=float)
        if offs.size and (np.any(offs <= 0) or np.any(offs >= self.patch_radius / 2)):
            raise InvalidInput("probe offsets must lie in (0, patch_radius/2)")


@dataclass(frozen=True)
class LogFit:
    """Least-squares line ``value = slope * ln(1/offset) + intercept``."""

    slope: float
    intercept: float
    residual: float


def _gauss_panels(upper: float, panels_per_unit: int, order: int = 16):
    npan = max(1, math.ceil(upper * panels_per_unit))
    edges = np.linspace(0.0, upper, npan + 1)
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _patch_quadrature(k1, k2, a, d, n_phi, panels_per_unit):
    # r = d sinh(u) absorbs the 1/sqrt(r^2 + d^2) peak at the foot of the probe
    phi = 2 * math.pi * np.arange(n_phi) / n_phi
    q = k1 * np.cos(phi) ** 2 + k2 * np.sin(phi) ** 2
    u, wu = _gauss_panels(math.asinh(a / d), panels_per_unit)
    r = d * np.sinh(u)
    drdu = d * np.cosh(u)
    x3 = 0.5 * r[None, :] ** 2 * q[:, None]
    dist = np.sqrt(r[None, :] ** 2 + (x3 - d) ** 2)
    # numerator (k1 x1^2 + k2 x2^2 - x3) r dr over |x|^3 reduces to q/2 * dr / (1 + r^2 q^2/4)^(3/2)
    integrand = 0.5 * q[:, None] / (dist * (1 + 0.25 * r[None, :] ** 2 * q[:, None] ** 2) ** 1.5)
    radial = integrand @ (wu * drdu)
    return radial.sum() * (2 * math.pi / n_phi) / (4 * math.pi**2)


def patch_v0(spec: PatchSpec, offset: float) -> float:
    """Dominant part of ``v0(y, z)`` for ``y`` at distance ``offset`` along the inward normal.

    Integrates over the projection disk of radius ``spec.patch_radius`` with
    the surface ``x3 = (kappa1 x1^2 + kappa2 x2^2) / 2``. Resolution doubles
    in both directions until successive values agree to 1e-6 relative.
    """
    a = spec.patch_radius
    if not 0 < offset < a / 2:
        raise InvalidInput(f"offset must lie in (0, {a / 2:g}), got {offset}")
    if spec.kappa1 == 0 and spec.kappa2 == 0:
        return 0.0
    n_phi, ppu = 16, 1
    prev = _patch_quadrature(spec.kappa1, spec.kappa2, a, offset, n_phi, ppu)
    for _ in range(PATCH_MAX_REFINEMENTS):
        n_phi, ppu = 2 * n_phi, 2 * ppu
        cur = _patch_quadrature(spec.kappa1, spec.kappa2, a, offset, n_phi, ppu)
        if abs(cur - prev) <= PATCH_RTOL * abs(cur):
            return float(cur)
        prev = cur
    raise QuadratureFailure(f"patch quadrature did not reach {PATCH_RTOL:g} at offset {offset:g}")


def fit_log_slope(offsets: Sequence[float], values: Sequence[float]) -> LogFit:
    """Fit ``values`` against ``ln(1/offsets)``; needs >= 4 points over >= 1 decade."""
    d = np.asarray(offsets, dtype=float)
    v = np.asarray(values, dtype=float)
    if d.shape != v.shape or d.ndim != 1:
        raise InvalidInput("offsets and values must be 1-D sequences of equal length")
    if d.size < 4:
        raise IllConditioned(f"need at least 4 points, got {d.size}")
    if np.any(d <= 0):
        raise InvalidInput("offsets must be positive")
    if d.max() / d.min() < 10 * (1 - 1e-12):
        raise IllConditioned("offsets must span at least one decade")
    x = np.log(1 / d)
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, v, rcond=None)
    residual = float(np.max(np.abs(A @ [slope, intercept] - v)))
    return LogFit(float(slope), float(intercept), residual)


def patch_log_slope(spec: PatchSpec) -> tuple[LogFit, np.ndarray]:
    offs = np.asarray(spec.probe_offsets, dtype=float)
    vals = np.array([patch_v0(spec, d) for d in offs])
    return fit_log_slope(offs, vals), vals


# ------------------------------------------------------------------ ball


def _correction_coefficient(l: np.ndarray) -> np.ndarray:
    # Matching d/dr of 1/(4 pi |x - y|) on r = R degree by degree gives the
    # interior harmonic A_l r^l P_l with A_l = (l+1)/l * rho^l / (4 pi R^(2l+1)).
    return (l + 1.0) / l


def _legendre_partial_sum(t: float, mu: float, L: int) -> tuple[float, float]:
    """sum_{l=1}^{L} (l+1)/l t^l P_l(mu) and its last term."""
    total = 0.0
    p_prev, p = 1.0, mu
    tl = 1.0
    term = 0.0
    for l in range(1, L + 1):
        tl *= t
        term = _correction_coefficient(l) * tl * p
        total += term
        p_prev, p = p, ((2 * l + 1) * mu * p - l * p_prev) / (l + 1)
    return total, term


def _legendre_closed_sum(t: float, mu: float) -> float:
    """sum_{l>=1} (1 + 1/l) t^l P_l(mu) from the Legendre generating function and its integral."""
    s = math.sqrt(max(1 - 2 * t * mu + t * t, 0.0))
    return (1 / s - 1) + math.log(2 / (1 - t * mu + s))


def neumann_ball(x, y, R: float, truncation: int = 64, tail: bool = True) -> float:
    """Neumann function of the ball ``|x| < R``, normalised to zero mean.

    Solves ``Lap_x N = -delta(x - y) + 1/|Omega|`` with zero normal derivative
    on the sphere. The harmonic correction is the Legendre series
    ``sum_l (1 + 1/l) t^l P_l(mu)`` with ``t = |x||y|/R^2``. With ``tail=True``
    the series is summed in closed form, which stays exact when ``x`` or ``y``
    is on the sphere (there ``t -> 1`` and partial sums converge only
    logarithmically). With ``tail=False`` degrees ``1..truncation`` are summed
    explicitly and a :class:`TruncationWarning` is issued when the last
    retained term exceeds 1e-8 of the running sum.
    """
    if not R > 0:
        raise InvalidInput(f"R must be positive, got {R}")
    if truncation < 1:
        raise InvalidInput(f"truncation must be a positive integer, got {truncation}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r, rho = float(np.linalg.norm(x)), float(np.linalg.norm(y))
    lim = R * (1 + 1e-12)
    if r > lim or rho > lim:
        raise InvalidInput("both points must lie in the closed ball")
    sep = float(np.linalg.norm(x - y))
    if sep == 0:
        raise InvalidInput("x and y must differ")
    t = r * rho / R**2
    mu = float(np.clip(x @ y / (r * rho), -1.0, 1.0)) if r > 0 and rho > 0 else 0.0
    if tail:
        series = _legendre_closed_sum(t, mu)
    else:
        partial, last = _legendre_partial_sum(t, mu, truncation)
        series = partial
        if abs(last) > TRUNCATION_RTOL * abs(partial):
            warnings.warn(
                f"last retained term {last:.3g} exceeds {TRUNCATION_RTOL:g} of the sum {partial:.3g}",
                TruncationWarning, stacklevel=2,
            )
    return (
        1 / (4 * math.pi * sep)
        + series / (4 * math.pi * R)
        + (r * r + rho * rho) / (8 * math.pi * R**3)
        - 9 / (20 * math.pi * R)
    )


def boundary_log_coefficient_ball(R: float, truncation: int = 64, offsets: Sequence[float] | None = None) -> LogFit:
    """Coefficient of ``ln(1/|y - z|)`` in ``N(y, z)`` for ``z`` on the sphere.

    ``y`` approaches ``z`` along the inward normal; the boundary Coulomb term
    ``1/(2 pi |y - z|)`` is subtracted before fitting. Offsets default to
    ``logspace(-4, -2) * R``.
    """
    offs = np.asarray(offsets if offsets is not None else np.array(DEFAULT_OFFSETS) * R, dtype=float)
    z = np.array([0.0, 0.0, R])
    vals = [
        neumann_ball(z - np.array([0.0, 0.0, d]), z, R, truncation) - 1 / (2 * math.pi * d)
        for d in offs
    ]
    return fit_log_slope(offs, vals)
