"""Implicit domains, boundary projection, principal curvatures and circular windows.

A domain is the open set ``{x : F(x) < 0}`` of a smooth function ``F``. The
Monte Carlo kernels only understand three concrete kinds (ball, box,
polynomial); arbitrary callables are accepted for the pure-geometry
operations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import DegenerateGradient, GeometryWarning, InvalidInput, NonConvergence

Point = Sequence[float]

_NEWTON_MAX_ITER = 50
_BOUNDARY_RTOL = 1e-9
_FD_HESSIAN_REL_STEP = 1e-4
_GRAD_FLOOR = 1e-12
WINDOW_SLACK = 0.5

IMPLICIT_FORMAT_TAG = "narrowescape-implicit v1"


class Role(str, Enum):
    ESCAPE = "escape"
    LEAK = "leak"
    TARGET = "target"


@dataclass(frozen=True)
class DomainDescriptor:
    """Bounded domain ``{F < 0}`` with derivative evaluators.

    ``kind``/``params`` identify the concrete family so the simulation
    kernels can use closed-form boundary handling; ``"generic"`` domains
    support the geometry operations only.
    """

    implicit_function: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Optional[Callable[[np.ndarray], np.ndarray]]
    volume: float
    bounding_box: tuple[tuple[float, float, float], tuple[float, float, float]]
    kind: str = "generic"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.volume > 0 and math.isfinite(self.volume)):
            raise InvalidInput(f"domain volume must be positive, got {self.volume}")
        lo, hi = (np.asarray(c, dtype=float) for c in self.bounding_box)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(hi <= lo):
            raise InvalidInput("bounding box must be two 3-points with lo < hi")

    @property
    def diagonal(self) -> float:
        lo, hi = (np.asarray(c, dtype=float) for c in self.bounding_box)
        return float(np.linalg.norm(hi - lo))

    @property
    def length_scale(self) -> float:
        """|Omega|^(1/3), the length used to make variables dimensionless."""
        return self.volume ** (1.0 / 3.0)

    @property
    def f_scale(self) -> float:
        lo, hi = (np.asarray(c, dtype=float) for c in self.bounding_box)
        mid = 0.5 * (lo + hi)
        pad = 0.1 * (hi - lo)
        corners = [
            np.where(np.array(bits, dtype=bool), hi + pad, lo - pad)
            for bits in np.ndindex(2, 2, 2)
        ]
        vals = [abs(self.implicit_function(mid))] + [abs(self.implicit_function(c)) for c in corners]
        return max(vals) or 1.0

    @property
    def boundary_tol(self) -> float:
        return _BOUNDARY_RTOL * self.f_scale


@dataclass(frozen=True)
class Curvatures:
    kappa1: float
    kappa2: float

    @property
    def sum(self) -> float:
        return self.kappa1 + self.kappa2


@dataclass(frozen=True)
class CircularWindow:
    """Absorbing disk of radius ``radius`` centred on the boundary."""

    center: tuple[float, float, float]
    radius: float
    normal: tuple[float, float, float]
    tangent_frame: tuple[tuple[float, float, float], tuple[float, float, float]]
    role: Role = Role.ESCAPE

    def epsilon(self, domain: DomainDescriptor) -> float:
        return self.radius / domain.length_scale


@dataclass(frozen=True)
class FaceWindow:
    """A whole face of a box domain, e.g. ``face="-z"`` is the plane z = 0."""

    face: str
    role: Role = Role.TARGET

    @property
    def axis(self) -> int:
        return "xyz".index(self.face[1])

    @property
    def upper(self) -> bool:
        return self.face[0] == "+"


# ---------------------------------------------------------------- constructors


def ball(R: float) -> DomainDescriptor:
    """Ball of radius ``R`` centred at the origin, ``F = |x|^2 - R^2``."""
    if not R > 0:
        raise InvalidInput(f"ball radius must be positive, got {R}")
    R = float(R)

    def F(x):
        x = np.asarray(x, dtype=float)
        return float(x @ x - R * R)

    def grad(x):
        return 2.0 * np.asarray(x, dtype=float)

    def hess(x):
        return 2.0 * np.eye(3)

    return DomainDescriptor(
        F, grad, hess,
        volume=4.0 * math.pi * R**3 / 3.0,
        bounding_box=((-R,) * 3, (R,) * 3),
        kind="ball",
        params={"R": R},
    )


def box(lx: float, ly: float, lz: float) -> DomainDescriptor:
    """Axis-aligned box ``[0,lx] x [0,ly] x [0,lz]``.

    ``F`` is the max of the six face functions, so it is piecewise linear and
    the faces have zero curvature.
    """
    L = np.array([lx, ly, lz], dtype=float)
    if np.any(L <= 0):
        raise InvalidInput(f"box side lengths must be positive, got {tuple(L)}")

    def F(x):
        x = np.asarray(x, dtype=float)
        return float(np.max(np.concatenate([-x, x - L])))

    def grad(x):
        x = np.asarray(x, dtype=float)
        k = int(np.argmax(np.concatenate([-x, x - L])))
        g = np.zeros(3)
        g[k % 3] = -1.0 if k < 3 else 1.0
        return g

    def hess(x):
        return np.zeros((3, 3))

    return DomainDescriptor(
        F, grad, hess,
        volume=float(np.prod(L)),
        bounding_box=((0.0, 0.0, 0.0), tuple(L)),
        kind="box",
        params={"L": tuple(L)},
    )


def polynomial(
    terms: Sequence[tuple[float, int, int, int]],
    bounding_box,
    volume: Optional[float] = None,
) -> DomainDescriptor:
    """Domain bounded by the zero set of ``F = sum c * x^i y^j z^k``.

    Without ``volume`` the volume is estimated from 2^16 scrambled Sobol
    points in the bounding box (seeded, so reproducible).
    """
    if not terms:
        raise InvalidInput("polynomial domain needs at least one term")
    coef = np.array([t[0] for t in terms], dtype=float)
    exps = np.array([t[1:] for t in terms], dtype=np.int64)
    if exps.shape[1] != 3 or np.any(exps < 0):
        raise InvalidInput("polynomial exponents must be three non-negative integers")

    def F(x):
        x = np.asarray(x, dtype=float)
        return float(coef @ np.prod(x[None, :] ** exps, axis=1))

    def grad(x):
        x = np.asarray(x, dtype=float)
        g = np.zeros(3)
        for axis in range(3):
            e = exps.copy()
            c = coef * e[:, axis]
            e[:, axis] = np.maximum(e[:, axis] - 1, 0)
            g[axis] = c @ np.prod(x[None, :] ** e, axis=1)
        return g

    def hess(x):
        x = np.asarray(x, dtype=float)
        H = np.zeros((3, 3))
        for i in range(3):
            for j in range(i, 3):
                e = exps.copy()
                c = coef * e[:, i]
                e[:, i] = np.maximum(e[:, i] - 1, 0)
                c = c * e[:, j]
                e[:, j] = np.maximum(e[:, j] - 1, 0)
                H[i, j] = H[j, i] = c @ np.prod(x[None, :] ** e, axis=1)
        return H

    lo, hi = (tuple(float(v) for v in c) for c in bounding_box)
    if volume is None:
        volume = _estimate_volume(F, lo, hi)
    return DomainDescriptor(
        F, grad, hess,
        volume=float(volume),
        bounding_box=(lo, hi),
        kind="polynomial",
        params={"coef": coef, "exps": exps},
    )


def _estimate_volume(F, lo, hi, m: int = 16) -> float:
    lo, hi = np.asarray(lo), np.asarray(hi)
    pts = qmc.Sobol(d=3, scramble=True, seed=12345).random_base2(m)
    pts = lo + pts * (hi - lo)
    frac = np.mean([F(p) < 0 for p in pts])
    return float(frac * np.prod(hi - lo))


def load_implicit(path: str | Path) -> DomainDescriptor:
    """Read a polynomial domain from the versioned text format.

    ::

        # narrowescape-implicit v1
        bbox  -1 -1 -1  1 1 1
        volume 4.18879          (optional)
        term  1.0  2 0 0        (coefficient, then powers of x, y, z)
        term -1.0  0 0 0
    """
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != f"# {IMPLICIT_FORMAT_TAG}":
        raise InvalidInput(f"{path}: first line must be '# {IMPLICIT_FORMAT_TAG}'")
    bbox = None
    vol = None
    terms = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        try:
            if key == "bbox":
                v = [float(s) for s in rest]
                if len(v) != 6:
                    raise ValueError
                bbox = (tuple(v[:3]), tuple(v[3:]))
            elif key == "volume":
                (vol,) = (float(s) for s in rest)
            elif key == "term":
                c, i, j, k = rest
                terms.append((float(c), int(i), int(j), int(k)))
            else:
                raise InvalidInput(f"{path}:{lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise InvalidInput(f"{path}:{lineno}: malformed line {raw!r}") from exc
    if bbox is None:
        raise InvalidInput(f"{path}: missing 'bbox' line")
    return polynomial(terms, bbox, vol)


def parse_domain(spec: str) -> DomainDescriptor:
    """``ball:R=<r>``, ``box:<lx>,<ly>,<lz>`` or ``implicit:<path>``."""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "ball":
            key, _, val = arg.partition("=")
            if key != "R":
                raise ValueError
            return ball(float(val))
        if kind == "box":
            lx, ly, lz = (float(s) for s in arg.split(","))
            return box(lx, ly, lz)
    except ValueError as exc:
        raise InvalidInput(f"malformed domain spec {spec!r}") from exc
    if kind == "implicit":
        return load_implicit(arg)
    raise InvalidInput(f"unknown domain kind in {spec!r}; expected ball:, box: or implicit:")


# ------------------------------------------------------------------ operations


def inside(domain: DomainDescriptor, x: Point) -> bool:
    return domain.implicit_function(np.asarray(x, dtype=float)) < 0


def project_to_boundary(domain: DomainDescriptor, x: Point, max_iter: int = _NEWTON_MAX_ITER):
    """Newton iteration along the gradient onto ``F = 0``.

    Returns ``(z, normal)`` with the outward unit normal at ``z``.
    """
    z = np.array(x, dtype=float)
    tol = domain.boundary_tol
    for _ in range(max_iter):
        f = domain.implicit_function(z)
        g = np.asarray(domain.gradient(z), dtype=float)
        gg = g @ g
        if gg < _GRAD_FLOOR**2:
            raise DegenerateGradient(f"gradient vanishes near {z}")
        if abs(f) < tol:
            return z, g / math.sqrt(gg)
        z = z - f * g / gg
    raise NonConvergence(f"boundary projection from {tuple(x)} did not converge in {max_iter} iterations")


def _hessian(domain: DomainDescriptor, z: np.ndarray) -> np.ndarray:
    if domain.hessian is not None:
        return np.asarray(domain.hessian(z), dtype=float)
    h = _FD_HESSIAN_REL_STEP * domain.diagonal
    H = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        H[:, j] = (np.asarray(domain.gradient(z + e)) - np.asarray(domain.gradient(z - e))) / (2 * h)
    return 0.5 * (H + H.T)


def tangent_frame(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    e = np.zeros(3)
    e[int(np.argmin(np.abs(n)))] = 1.0
    t1 = e - (e @ n) * n
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


def principal_curvatures(domain: DomainDescriptor, z: Point) -> Curvatures:
    """Eigenvalues of the shape operator, positive on convex surfaces.

    The shape operator is ``P H P / |grad F|`` restricted to the tangent
    plane, where ``P`` projects out the outward normal.
    """
    z = np.asarray(z, dtype=float)
    g = np.asarray(domain.gradient(z), dtype=float)
    gn = np.linalg.norm(g)
    if gn < _GRAD_FLOOR * max(1.0, domain.f_scale / domain.diagonal):
        raise DegenerateGradient(f"|grad F| = {gn:g} at {tuple(z)}")
    n = g / gn
    t1, t2 = tangent_frame(n)
    T = np.stack([t1, t2], axis=1)
    S = T.T @ _hessian(domain, z) @ T / gn
    k = np.linalg.eigvalsh(0.5 * (S + S.T))
    return Curvatures(float(k[1]), float(k[0]))


def window_contains(window: CircularWindow, z: Point) -> bool:
    d = np.asarray(z, dtype=float) - np.asarray(window.center)
    t1, t2 = (np.asarray(t) for t in window.tangent_frame)
    tang = math.hypot(d @ t1, d @ t2)
    return tang < window.radius and float(np.linalg.norm(d)) < window.radius * (1 + WINDOW_SLACK)


def make_window(domain: DomainDescriptor, center: Point, radius: float, role: Role | str = Role.ESCAPE) -> CircularWindow:
    """Build a window at a boundary point, projecting ``center`` onto the boundary.

    Box windows must lie inside one face (no edge overlap); a warning is
    issued within 5 radii of an edge or when the radius exceeds a tenth of
    the local rolling-ball radius.
    """
    if not radius > 0:
        raise InvalidInput(f"window radius must be positive, got {radius}")
    role = Role(role)
    z, n = project_to_boundary(domain, center)
    if domain.kind == "box":
        _check_box_window(domain, z, n, radius)
    else:
        k = principal_curvatures(domain, z)
        kmax = max(abs(k.kappa1), abs(k.kappa2))
        if kmax > 0 and radius > 0.1 / kmax:
            warnings.warn(
                f"window radius {radius:g} exceeds a tenth of the rolling-ball radius {1 / kmax:g}",
                GeometryWarning, stacklevel=2,
            )
    t1, t2 = tangent_frame(n)
    return CircularWindow(
        center=tuple(float(v) for v in z),
        radius=float(radius),
        normal=tuple(float(v) for v in n),
        tangent_frame=(tuple(float(v) for v in t1), tuple(float(v) for v in t2)),
        role=role,
    )


def _check_box_window(domain, z, n, radius):
    L = np.asarray(domain.params["L"])
    axis = int(np.argmax(np.abs(n)))
    others = [i for i in range(3) if i != axis]
    edge_dist = min(min(z[i], L[i] - z[i]) for i in others)
    if edge_dist < radius:
        raise InvalidInput(
            f"window of radius {radius:g} at {tuple(z)} overlaps a box edge (distance {edge_dist:g})"
        )
    if edge_dist < 5 * radius:
        warnings.warn(
            f"window at {tuple(z)} is within 5 radii of a box edge", GeometryWarning, stacklevel=3,
        )


def face_window(domain: DomainDescriptor, face: str, role: Role | str = Role.TARGET) -> FaceWindow:
    if domain.kind != "box":
        raise InvalidInput("face windows are only defined for box domains")
    if len(face) != 2 or face[0] not in "+-" or face[1] not in "xyz":
        raise InvalidInput(f"face must look like '+z' or '-x', got {face!r}")
    return FaceWindow(face=face, role=Role(role))


def sample_boundary(domain: DomainDescriptor, n: int, rng: np.random.Generator) -> np.ndarray:
    """Boundary points obtained by projecting uniform points of the bounding box."""
    lo, hi = (np.asarray(c, dtype=float) for c in domain.bounding_box)
    pts = []
    while len(pts) < n:
        x = lo + rng.random(3) * (hi - lo)
        try:
            z, _ = project_to_boundary(domain, x)
        except (NonConvergence, DegenerateGradient):
            continue
        pts.append(z)
    return np.array(pts)
