"""Integral equation for the flux density on a small absorbing disk.

On the window ``|x| < a`` the flux density ``g`` solves

    int g(x) [1 / (2 pi |x - y|) + H log|x - y|] dS_x = -C,

where ``H`` is the frozen log coefficient ``-(kappa1 + kappa2) / (8 pi)`` of
the boundary Neumann function and ``C`` is the constant value of the mean
first passage time on the window. The unknown is axisymmetric and carries the
edge factor ``1/sqrt(1 - r^2/a^2)``, so we write ``g = p(t) / sqrt(1 - t)``
with ``t = r^2/a^2`` and ``p`` a polynomial of degree ``n - 1``.

The same polynomial space is spanned by ``P_2k(w) / w`` with
``w = sqrt(1 - t)`` (``P_2k`` is even, hence a polynomial in ``w^2 = 1 - t``).
In that basis both kernels integrate in closed form:

* the disk Coulomb operator is diagonal,
  ``int P_2k(w')/w' / |x - x'| dS' = pi^2 P_2k(0)^2 P_2k(w)`` on the unit disk;
* the angular average of ``log|x - x'|`` is exactly ``2 pi log max(r, r')``,
  which leaves one-dimensional integrals of polynomials (see
  :func:`_log_operator`).

Collocation is done at Chebyshev nodes in ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import eval_legendre, roots_jacobi

from .asymptotics import _positive
from .errors import InvalidInput, RegimeError, SingularMatrix

MIN_NODES = 8
RESIDUAL_RTOL = 1e-6
COND_LIMIT = 1e13


@dataclass(frozen=True)
class HelmholtzProblem:
    radius: float
    kernel_log_coefficient: float
    rhs: float
    node_count: int = 16

    def __post_init__(self):
        _positive(radius=self.radius)
        if not math.isfinite(self.kernel_log_coefficient) or not math.isfinite(self.rhs):
            raise InvalidInput("kernel_log_coefficient and rhs must be finite")
        if int(self.node_count) != self.node_count or self.node_count < MIN_NODES:
            raise InvalidInput(f"node_count must be an integer >= {MIN_NODES}, got {self.node_count}")


@dataclass(frozen=True)
class FluxDensityGrid:
    """Flux density sampled at the collocation radii.

    ``weights_values[i]`` is ``g(r_i) * sqrt(1 - r_i^2/a^2)``; between nodes
    the bounded factor is the Chebyshev interpolant in ``t = r^2/a^2``.
    ``rhs_constant`` is the right-hand side ``-C``.
    """

    radius: float
    nodes: np.ndarray
    weights_values: np.ndarray
    rhs_constant: float
    residual: float = 0.0

    def bounded_part(self, r) -> np.ndarray:
        """``g(r) * sqrt(1 - r^2/a^2)`` at arbitrary radii in ``[0, a]``."""
        t = (np.asarray(r, dtype=float) / self.radius) ** 2
        return np.polynomial.chebyshev.chebval(2 * t - 1, self._cheb_coefficients())

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        t = (r / self.radius) ** 2
        if np.any(t >= 1):
            raise InvalidInput("g is only defined for r < a")
        return self.bounded_part(r) / np.sqrt(1 - t)

    def _cheb_coefficients(self) -> np.ndarray:
        t = (self.nodes / self.radius) ** 2
        n = t.size
        return np.polynomial.chebyshev.chebfit(2 * t - 1, self.weights_values, n - 1)


def chebyshev_t_nodes(n: int) -> np.ndarray:
    """Chebyshev points of the first kind mapped to ``t`` in (0, 1), ascending."""
    k = np.arange(n)
    return 0.5 * (1 - np.cos((2 * k + 1) * math.pi / (2 * n)))


def _coulomb_operator(w: np.ndarray, n: int) -> np.ndarray:
    """``int P_2k(w')/w' / (2 pi |x - x'|) dS'`` on the unit disk, rows at ``w``."""
    k = np.arange(n)
    return 0.5 * math.pi * eval_legendre(2 * k, 0.0) ** 2 * eval_legendre(2 * k[None, :], w[:, None])


def _log_operator(w: np.ndarray, n: int) -> np.ndarray:
    """``int P_2k(w')/w' log|x - x'| dS'`` on the unit disk, rows at ``w``.

    With ``r' dr' / w' = -dw'`` and the exact angular average the entry is
    ``2 pi int_0^1 P_2k(v) log max(r, r') dv``. Splitting at ``v = w`` and
    integrating ``log(1 - v^2)`` by parts against ``A_k(v) = int_0^v P_2k``
    cancels every ``log r`` term and leaves
    ``2 pi (log(1 + w) - w)`` for ``k = 0`` and
    ``2 pi int_0^w A_k(v) v / (1 - v^2) dv`` for ``k >= 1``, where
    ``A_k / (1 - v^2)`` is a polynomial because ``A_k(+-1) = 0``.
    """
    out = np.empty((w.size, n))
    out[:, 0] = 2 * math.pi * (np.log1p(w) - w)
    if n == 1:
        return out
    x, wt = np.polynomial.legendre.leggauss(n + 2)
    v = 0.5 * w[:, None] * (x[None, :] + 1)
    wv = 0.5 * w[:, None] * wt[None, :]
    kernel = wv * v / (1 - v * v)
    for k in range(1, n):
        A = (eval_legendre(2 * k + 1, v) - eval_legendre(2 * k - 1, v)) / (4 * k + 1)
        out[:, k] = 2 * math.pi * np.sum(kernel * A, axis=1)
    return out


def _system(a: float, H: float, n: int):
    t = chebyshev_t_nodes(n)
    w = np.sqrt(1 - t)
    M = a * _coulomb_operator(w, n)
    if H != 0:
        M = M + H * a * a * _log_operator(w, n)
        M[:, 0] += H * a * a * 2 * math.pi * math.log(a)
    basis = eval_legendre(2 * np.arange(n)[None, :], w[:, None])
    return t, M, basis


def solve_disk(problem: HelmholtzProblem) -> FluxDensityGrid:
    a, H, rhs, n = problem.radius, problem.kernel_log_coefficient, problem.rhs, int(problem.node_count)
    if H != 0 and not abs(H) * a * abs(math.log(a)) < 1:
        raise RegimeError(f"|H| a |log a| = {abs(H) * a * abs(math.log(a)):.3g} is not below 1")
    t, M, basis = _system(a, H, n)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrix(f"collocation matrix condition number {cond:.3g}")
    coef = np.linalg.solve(M, np.full(n, rhs))
    resid = float(np.max(np.abs(M @ coef - rhs))) if n else 0.0
    if rhs != 0 and resid > RESIDUAL_RTOL * abs(rhs):
        raise SingularMatrix(f"collocation residual {resid:.3g} exceeds {RESIDUAL_RTOL:g} |C|")
    return FluxDensityGrid(
        radius=a,
        nodes=a * np.sqrt(t),
        weights_values=basis @ coef,
        rhs_constant=float(rhs),
        residual=resid,
    )


def total_flux(grid: FluxDensityGrid) -> float:
    """``int_disk g dS = pi a^2 int_0^1 p(t) (1 - t)^(-1/2) dt`` by Gauss-Jacobi quadrature.

    The bounded part ``p`` is a polynomial of degree ``n - 1`` in ``t``, so the
    rule with ``n`` points integrates it exactly.
    """
    n = grid.nodes.size
    x, wj = roots_jacobi(n, -0.5, 0.0)
    t = 0.5 * (1 + x)
    p = np.polynomial.chebyshev.chebval(2 * t - 1, grid._cheb_coefficients())
    # dt = dx/2 and (1 - t)^(-1/2) = sqrt(2) (1 - x)^(-1/2)
    return float(math.pi * grid.radius**2 * (wj @ p) / math.sqrt(2))


def analytic_g1_ratio(a: float, curvature_sum: float) -> float:
    """First-order relative change of the flux density, ``(kappa_sum / 2 pi) a log a``."""
    if not 0 < a < 1:
        raise InvalidInput(f"a must lie in (0, 1), got {a}")
    return curvature_sum / (2 * math.pi) * a * math.log(a)


def flux_perturbation(a: float, curvature_sum: float, node_count: int = 16) -> float:
    """Solver flux ratio ``F(H) / F(0) - 1`` with ``H = -kappa_sum / (8 pi)`` and unit ``C``."""
    f0 = total_flux(solve_disk(HelmholtzProblem(a, 0.0, -1.0, node_count)))
    f1 = total_flux(solve_disk(HelmholtzProblem(a, -curvature_sum / (8 * math.pi), -1.0, node_count)))
    return f1 / f0 - 1


def net_from_solver(volume: float, a: float, D: float, curvature_sum: float, node_count: int = 16) -> float:
    """NET from the disk equation in units where ``|Omega| = 1``.

    Lengths are divided by ``l = |Omega|^(1/3)`` and curvatures multiplied by
    it. Solving with ``C = 1`` gives a scaled flux ``F_s``; the compatibility
    condition ``flux = -|Omega| / D`` then fixes ``C = |Omega| / (D l |F_s|)``.
    """
    _positive(volume=volume, a=a, D=D)
    ell = volume ** (1.0 / 3.0)
    a_s = a / ell
    if not a_s < 1:
        raise InvalidInput(f"window radius {a} must be below |Omega|^(1/3) = {ell:.6g}")
    H = -curvature_sum * ell / (8 * math.pi)
    grid = solve_disk(HelmholtzProblem(a_s, H, -1.0, node_count))
    return volume / (D * ell * abs(total_flux(grid)))
