import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from narrowescape import greens
from narrowescape.errors import IllConditioned, InvalidInput, TruncationWarning

OFFSETS = tuple(np.logspace(-4, -2, 7))


def test_flat_patch_is_zero():
    spec = greens.PatchSpec(0.0, 0.0, 0.1)
    assert greens.patch_v0(spec, 1e-3) == 0.0


@pytest.mark.parametrize("k1,k2", [(1.0, 1.0), (1.0, 0.0), (2.0, 1.0)])
def test_patch_slope(k1, k2):
    fit, _ = greens.patch_log_slope(greens.PatchSpec(k1, k2, 0.1, OFFSETS))
    assert fit.slope == pytest.approx((k1 + k2) / (8 * math.pi), rel=0.05)


@pytest.mark.parametrize("k1,k2", [(1.0, 0.0), (2.0, 0.5)])
def test_patch_swap_symmetry(k1, k2):
    for d in (1e-4, 1e-3, 1e-2):
        a = greens.patch_v0(greens.PatchSpec(k1, k2, 0.1), d)
        b = greens.patch_v0(greens.PatchSpec(k2, k1, 0.1), d)
        assert abs(a - b) <= 1e-6 * abs(a)


@pytest.mark.parametrize("s", [0.5, 2.0])
def test_patch_curvature_scaling(s):
    base, _ = greens.patch_log_slope(greens.PatchSpec(1.0, 0.5, 0.1, OFFSETS))
    scaled, _ = greens.patch_log_slope(greens.PatchSpec(s, 0.5 * s, 0.1, OFFSETS))
    assert scaled.slope == pytest.approx(s * base.slope, rel=0.05)


def test_patch_spec_validation():
    with pytest.raises(InvalidInput):
        greens.PatchSpec(1, 1, 0.1, (0.06,))
    with pytest.raises(InvalidInput):
        greens.PatchSpec(1, 1, -0.1)
    with pytest.raises(InvalidInput):
        greens.patch_v0(greens.PatchSpec(1, 1, 0.1), 0.07)


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-5, -1), st.floats(1.0, 3.0), st.integers(4, 20))
def test_fit_recovers_planted_line(c, b, lo, span, n):
    d = np.logspace(lo, lo + span, n)
    fit = greens.fit_log_slope(d, c * np.log(1 / d) + b)
    assert fit.slope == pytest.approx(c, abs=1e-12 * max(1.0, abs(c)))
    assert fit.intercept == pytest.approx(b, abs=1e-10 * max(1.0, abs(b), abs(c)))
    assert fit.residual < 1e-12 * max(1.0, abs(b), abs(c)) * 10


def test_fit_constant_and_errors():
    d = np.logspace(-4, -2, 5)
    assert greens.fit_log_slope(d, np.full(5, 3.0)).slope == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(IllConditioned):
        greens.fit_log_slope(d[:3], d[:3])
    with pytest.raises(IllConditioned):
        greens.fit_log_slope(np.linspace(1e-3, 5e-3, 5), np.ones(5))


def test_ball_radial_closed_form():
    # N(0, y) = 1/(4 pi rho) + rho^2/(8 pi R^3) - 9/(20 pi R), R = 1
    assert greens.neumann_ball((0, 0, 0), (0, 0, 1.0), 1.0) == pytest.approx(-0.023873, abs=1e-6)
    closed = 1 / (2 * math.pi) + 1 / (32 * math.pi) - 9 / (20 * math.pi)
    assert greens.neumann_ball((0, 0, 0), (0, 0.5, 0), 1.0) == pytest.approx(closed, rel=1e-12)
    assert closed == pytest.approx(0.025863, abs=1e-6)


def test_ball_zero_mean_radial():
    # with y at the centre the volume integral reduces to a radial one
    from scipy.integrate import quad
    for R in (1.0, 2.5):
        val, _ = quad(lambda r: 4 * math.pi * r * r * greens.neumann_ball((r, 0, 0), (0, 0, 0), R), 0, R, points=[1e-9])
        assert abs(val) < 1e-9 * R**2


def test_ball_symmetry():
    rng = np.random.default_rng(11)
    for _ in range(100):
        x, y = rng.uniform(-0.57, 0.57, (2, 3))
        assert abs(greens.neumann_ball(x, y, 1.0) - greens.neumann_ball(y, x, 1.0)) < 1e-12


def test_partial_sums_match_closed_form():
    rng = np.random.default_rng(2)
    for _ in range(20):
        x, y = rng.uniform(-0.4, 0.4, (2, 3))
        with warnings.catch_warnings():
            warnings.simplefilter("error", TruncationWarning)
            series = greens.neumann_ball(x, y, 1.0, truncation=64, tail=False)
        assert series == pytest.approx(greens.neumann_ball(x, y, 1.0), abs=1e-12)


def test_truncation_warning_near_sphere():
    with pytest.warns(TruncationWarning):
        greens.neumann_ball((0, 0, 0.999), (0.01, 0, 0.99), 1.0, truncation=8, tail=False)


def test_ball_pde_residual():
    R = 1.0
    rng = np.random.default_rng(4)
    y = np.array([0.0, 0.0, 0.5 * R])
    h = 2e-4
    target = 3 / (4 * math.pi * R**3)
    done = 0
    while done < 50:
        x = rng.uniform(-R, R, 3)
        if np.linalg.norm(x) > 0.9 * R or np.linalg.norm(x - y) < 0.2 * R:
            continue
        lap = -6 * greens.neumann_ball(x, y, R)
        for e in np.eye(3) * h:
            lap += greens.neumann_ball(x + e, y, R) + greens.neumann_ball(x - e, y, R)
        assert lap / h**2 == pytest.approx(target, rel=1e-3)
        done += 1


def test_ball_boundary_residual():
    R = 1.0
    rng = np.random.default_rng(5)
    v = rng.normal(size=3)
    y = 0.5 * R * v / np.linalg.norm(v)
    h = 1e-5
    for _ in range(50):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        z = R * n
        f = [greens.neumann_ball(z - k * h * n, y, R, truncation=64) for k in range(3)]
        assert abs((3 * f[0] - 4 * f[1] + f[2]) / (2 * h)) < 1e-4


@pytest.mark.parametrize("R", [1.0, 2.0])
def test_boundary_log_coefficient(R):
    fit = greens.boundary_log_coefficient_ball(R, truncation=64)
    assert fit.slope == pytest.approx(1 / (4 * math.pi * R), rel=0.02)
    assert fit.slope * 8 * math.pi == pytest.approx(2 / R, rel=0.02)


def test_neumann_ball_invalid():
    with pytest.raises(InvalidInput):
        greens.neumann_ball((0, 0, 0), (0, 0, 0), 1.0)
    with pytest.raises(InvalidInput):
        greens.neumann_ball((0, 0, 2), (0, 0, 0), 1.0)
