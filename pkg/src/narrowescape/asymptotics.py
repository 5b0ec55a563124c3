"""Closed-form small-window asymptotics.

Narrow escape time (NET) through a circular window of radius ``a`` on the
boundary of a domain of volume ``|Omega|``, the principal eigenvalue of the
mixed Dirichlet-Neumann Laplacian, the leakage flux through small holes and
the singular part of the boundary Neumann function.

All logarithms are natural. Dimensional inputs are made dimensionless with the
length ``|Omega|^(1/3)`` wherever a logarithm of a length appears.
"""

from __future__ import annotations

import itertools
import math
import numbers
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import InvalidInput, RegimeError, RegimeWarning, SeparationWarning

REGIME_LOG_CORRECTION = 0.5
REGIME_EPSILON = 0.2
LEAK_SEPARATION_RADII = 10.0


@dataclass(frozen=True)
class NetExpansion:
    """Two-term expansion of a NET (``mode="net"``) or of ``lambda_1`` (``mode="eigenvalue"``).

    ``leading`` is always the time ``|Omega|/(4 a D)``. ``form`` records whether
    the correction divides (``1/(1+c)``) or multiplies (``1+c``) the leading
    term. ``time_scale`` is ``|Omega|^(2/3)/D`` and converts to dimensionless
    values.
    """

    leading: float
    log_correction: float
    value: float
    regime_ok: bool
    form: str
    mode: str = "net"
    epsilon: float = float("nan")
    time_scale: float = float("nan")
    form_difference: float = 0.0

    @property
    def dimensionless_value(self) -> float:
        if self.mode == "eigenvalue":
            return self.value * self.time_scale
        return self.value / self.time_scale


@dataclass(frozen=True)
class LeakSpec:
    radius: float
    reduced_density: float
    position: Optional[tuple[float, float, float]] = None


def _positive(**kw):
    for name, v in kw.items():
        if isinstance(v, bool) or not (isinstance(v, numbers.Real) and math.isfinite(v) and v > 0):
            raise InvalidInput(f"{name} must be a positive finite number, got {v!r}")


def _check_regime(lc: float, eps: float) -> bool:
    ok = abs(lc) <= REGIME_LOG_CORRECTION and eps <= REGIME_EPSILON
    if abs(lc) > REGIME_LOG_CORRECTION:
        warnings.warn(
            f"|log correction| = {abs(lc):.3g} > {REGIME_LOG_CORRECTION}; expansion is unreliable",
            RegimeWarning, stacklevel=3,
        )
    return ok


def _general_terms(volume, a, D, curvature_sum):
    _positive(volume=volume, a=a, D=D)
    if not math.isfinite(curvature_sum):
        raise InvalidInput(f"curvature_sum must be finite, got {curvature_sum!r}")
    ell = volume ** (1.0 / 3.0)
    if not a < ell:
        raise InvalidInput(f"window radius {a} must be below |Omega|^(1/3) = {ell:.6g}")
    eps = a / ell
    # (kappa*ell) * eps == kappa * a: only the log argument feels the scaling
    lc = curvature_sum * ell / (2 * math.pi) * eps * math.log(eps)
    if 1 + lc <= 0:
        raise RegimeError(f"bracket 1 + {lc:.4g} is not positive; window too large for the expansion")
    return volume / (4 * a * D), lc, eps, ell * ell / D


def net_general(volume: float, a: float, D: float, curvature_sum: float) -> NetExpansion:
    """NET through a small circular window, divided form ``|Omega| / (4aD [1 + c])``.

    ``c = (kappa1 + kappa2)/(2 pi) * a * log(a / |Omega|^(1/3))``.
    """
    leading, lc, eps, ts = _general_terms(volume, a, D, curvature_sum)
    return NetExpansion(
        leading=leading,
        log_correction=lc,
        value=leading / (1 + lc),
        regime_ok=_check_regime(lc, eps),
        form="divided",
        epsilon=eps,
        time_scale=ts,
    )


def eigenvalue_small_window(volume: float, a: float, D: float, curvature_sum: float) -> NetExpansion:
    """Principal eigenvalue ``4aD/|Omega| * (1 + c)``, the exact reciprocal of :func:`net_general`."""
    leading, lc, eps, ts = _general_terms(volume, a, D, curvature_sum)
    return NetExpansion(
        leading=leading,
        log_correction=lc,
        value=(1 + lc) / leading,
        regime_ok=_check_regime(lc, eps),
        form="multiplied",
        mode="eigenvalue",
        epsilon=eps,
        time_scale=ts,
    )


def net_ball(R: float, a: float, D: float) -> NetExpansion:
    """NET for a ball of radius ``R``, multiplied form ``|Omega|/(4aD) [1 + a/(pi R) log(R/a)]``.

    ``form_difference`` is this value minus the divided form
    ``|Omega| / (4aD [1 - a/(pi R) log(R/a)])``; the two agree to the order
    retained.
    """
    _positive(R=R, a=a, D=D)
    if a > R:
        raise InvalidInput(f"window radius {a} exceeds ball radius {R}")
    volume = 4 * math.pi * R**3 / 3
    leading = volume / (4 * a * D)
    lc = a / (math.pi * R) * math.log(R / a)
    value = leading * (1 + lc)
    eps = a / volume ** (1.0 / 3.0)
    return NetExpansion(
        leading=leading,
        log_correction=lc,
        value=value,
        regime_ok=_check_regime(lc, eps) and a < R,
        form="multiplied",
        epsilon=eps,
        time_scale=volume ** (2.0 / 3.0) / D,
        form_difference=value - leading / (1 - lc),
    )


def leakage_flux(leak: LeakSpec, D: float) -> float:
    """Particles per unit time through one small hole: ``4 a D p0``."""
    _positive(radius=leak.radius, D=D)
    if not (math.isfinite(leak.reduced_density) and leak.reduced_density >= 0):
        raise InvalidInput(f"reduced density must be non-negative, got {leak.reduced_density!r}")
    return 4 * leak.radius * D * leak.reduced_density


def leakage_flux_multi(leaks: Sequence[LeakSpec], D: float) -> float:
    """Sum of single-hole fluxes for well separated holes of a common radius."""
    leaks = list(leaks)
    if not leaks:
        _positive(D=D)
        return 0.0
    radii = {lk.radius for lk in leaks}
    if len(radii) > 1:
        raise InvalidInput(f"all leaks must share one radius, got {sorted(radii)}")
    a = leaks[0].radius
    for p, q in itertools.combinations([lk.position for lk in leaks if lk.position is not None], 2):
        if math.dist(p, q) <= LEAK_SEPARATION_RADII * a:
            warnings.warn(
                f"leaks at {p} and {q} are closer than {LEAK_SEPARATION_RADII:g} radii",
                SeparationWarning, stacklevel=2,
            )
    return math.fsum(leakage_flux(lk, D) for lk in leaks)


def neumann_singular_part(distance: float, curvature_sum: float) -> float:
    """``1/(2 pi d) - (kappa1 + kappa2)/(8 pi) * ln d`` for a boundary source point."""
    _positive(distance=distance)
    return 1 / (2 * math.pi * distance) - curvature_sum / (8 * math.pi) * math.log(distance)
