import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from dpre2d import walk
from dpre2d.lattice import LatticeField, LatticeWindow, point_mass, uniform_ball

from oracles import kernel_by_enumeration


def test_one_step_kernel():
    K = walk.srw_kernel(1)
    for z in [(1, 0), (-1, 0), (0, 1), (0, -1)]:
        assert K.at(z) == 0.25
    assert K.at((0, 0)) == 0.0
    assert K.at((1, 1)) == 0.0


def test_small_kernel_values():
    assert walk.srw_kernel(2).at((0, 0)) == 0.25
    assert walk.srw_kernel(4).at((0, 0)) == 9 / 64


@pytest.mark.parametrize("n", range(0, 9))
def test_kernel_matches_path_enumeration(n):
    exact = kernel_by_enumeration(n)
    K = walk.srw_kernel(n)
    X, Y = K.field.window.coords()
    for x, y, v in zip(X.ravel(), Y.ravel(), K.field.values.ravel()):
        assert v == pytest.approx(float(exact.get((int(x), int(y)), Fraction(0))), abs=1e-15)


@pytest.mark.parametrize("n", [1, 7, 20, 333, 1024, 3000])
def test_kernel_mass_parity_symmetry(n):
    K = walk.srw_kernel(n, radius=min(n, 400))
    v = K.field.values
    assert abs(v.sum() - 1.0) < 1e-14
    X, Y = K.field.window.coords()
    assert np.all(v[(X + Y - n) % 2 != 0] == 0)
    for g in (v.T, v[::-1], v[:, ::-1], v[::-1, ::-1]):
        assert np.array_equal(v, g)


def test_truncated_kernel_rejected():
    with pytest.raises(ValueError):
        walk.srw_kernel(100, radius=5)


def test_capability_error_beyond_supported_range():
    with pytest.raises(walk.CapabilityError):
        walk.srw_kernel(walk.SUPPORTED_MAX_N + 1, radius=1)


@pytest.mark.parametrize("m,n", [(1, 1), (3, 5), (16, 16), (33, 64), (64, 64)])
def test_chapman_kolmogorov(m, n):
    a = walk.srw_kernel(m).field.values
    b = walk.srw_kernel(n).field.values
    c = signal.convolve2d(a, b)
    assert np.abs(c - walk.srw_kernel(m + n).field.values).max() < 1e-12


def test_overlap_values():
    assert walk.overlap(1) == 0.25
    assert walk.overlap(2) == 25 / 64
    R = walk.overlap(10**4)
    assert abs(R - math.log(10**4) / math.pi) < 0.75


def test_return_probability_bounds():
    n = np.arange(1, 10**5 + 1)
    q = walk.return_probabilities(10**5)[1:]
    nq = n * q
    assert nq.min() >= 0.25 - 1e-15
    assert nq.max() <= 1 / math.pi
    assert nq[0] == 0.25


def test_green_offset():
    assert walk.green_offset(1, (1, 1)) == 0.125
    assert walk.green_offset(1, (1, 0)) == 0.0
    assert walk.green_offset(37, (0, 0)) == pytest.approx(walk.overlap(37), abs=1e-15)


def test_quadratic_form_examples():
    assert walk.quadratic_form(25, point_mass()) == pytest.approx(walk.overlap(25), abs=1e-15)
    win = LatticeWindow(2, 0)
    v = np.zeros(win.shape)
    v[2, 2] = v[4, 2] = 0.5  # sites (0, 0) and (2, 0)
    phi = LatticeField(win, v, pmf=True)
    assert walk.quadratic_form(1, phi) == pytest.approx(5 / 32, abs=1e-15)
    assert walk.quadratic_form(9, phi) == pytest.approx(walk.quadratic_form(9, phi.translate((3, 1))), abs=1e-15)


def test_quadratic_form_rejects_non_pmf():
    win = LatticeWindow(1, 0)
    v = np.zeros(win.shape)
    v[1, 1] = 0.7
    with pytest.raises(ValueError):
        walk.quadratic_form(3, LatticeField(win, v))


def _random_pmf(rng, radius):
    win = LatticeWindow(radius, 0)
    v = rng.random(win.shape) * win.parity_mask() * (rng.random(win.shape) < 0.5)
    if v.sum() == 0:
        v[radius, radius] = 1.0
    return LatticeField(win, v / v.sum(), pmf=True)


def test_doubling_bound_random_pmfs():
    rng = np.random.default_rng(1)
    worst = -np.inf
    for k in range(1000):
        phi = _random_pmf(rng, int(rng.integers(0, 5)))
        L = int(rng.integers(2, 400))
        s = walk.pair_kernel_series(phi, L)
        gap = math.fsum(s[1:]) - math.fsum(s[1:L // 2 + 1])
        worst = max(worst, gap)
    assert worst <= walk.A_PLUS


def test_continuum_green():
    assert walk.continuum_green((1.0, 0.0)) == pytest.approx(0.0890907, abs=1e-7)
    assert walk.continuum_green((30.0, 0.0)) < 1e-150
    x = 1e-3
    assert abs(walk.continuum_green((x, 0.0)) - math.log(1 / x**2) / (2 * math.pi)) < 0.2
    rs = np.linspace(0.1, 5, 50)
    g = [walk.continuum_green((r, 0.0)) for r in rs]
    assert np.all(np.diff(g) < 0)
    with pytest.raises(ValueError):
        walk.continuum_green((0.0, 0.0))


def test_continuum_green_against_quadrature():
    from scipy import integrate

    for r in (0.3, 1.0, 2.5):
        val, _ = integrate.quad(lambda s: math.exp(-s / 2) / s, r * r, np.inf, epsabs=1e-13)
        assert walk.continuum_green((r, 0)) == pytest.approx(val / (2 * math.pi), abs=1e-10)


def test_discrete_green_close_to_continuum():
    """``|R_L(z) - 2 G((|z|+1)/sqrt L)|`` stays bounded as L grows (no growth trend)."""
    sups = []
    for L in (100, 1000, 10_000):
        dev = 0.0
        rL = int(math.sqrt(L))
        for z in [(0, 0), (1, 1), (2, 0), (rL // 2 * 2, 0), (rL // 2, rL // 2 + (rL // 2) % 2)]:
            if (z[0] + z[1]) % 2:
                continue
            r = (math.hypot(*z) + 1) / math.sqrt(L)
            dev = max(dev, abs(walk.green_offset(L, z) - 2 * walk.continuum_green((r, 0))))
        sups.append(dev)
    assert max(sups) < 1.0
    assert sups[-1] <= sups[0] + 0.1


def test_dampened_overlap():
    assert walk.dampened_overlap(40, 0.0) == pytest.approx(walk.overlap(40), abs=1e-15)
    assert walk.dampened_overlap(1, 1.0) == pytest.approx(math.exp(-1) / 4, abs=1e-16)
    assert walk.dampened_overlap(100, 50) <= walk.overlap(100) - 0.25 * math.log(25)
    vals = [walk.dampened_overlap(200, lam) for lam in (0, 1, 5, 20, 100)]
    assert np.all(np.diff(vals) < 0)
    with pytest.raises(ValueError):
        walk.dampened_overlap(10, -1.0)


def test_local_clt():
    assert walk.local_clt_check(2) == pytest.approx(abs(0.25 - 1 / math.pi), abs=1e-15)
    slope = walk.local_clt_slope([2**k for k in range(4, 13)])
    assert abs(slope + 2) <= 0.15
    with pytest.raises(ValueError):
        walk.local_clt_check(3)


def test_kernel_cache_limit():
    walk.set_kernel_cache_limit(10_000)
    try:
        a = walk.srw_kernel(30).field.values.copy()
        b = walk.srw_kernel(30).field.values
        assert np.array_equal(a, b)
    finally:
        walk.set_kernel_cache_limit(2 * 1024**3)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.integers(-8, 8), st.integers(-8, 8))
def test_green_offset_symmetry(L, x, y):
    v = walk.green_offset(L, (x, y))
    assert v == walk.green_offset(L, (-x, y)) == walk.green_offset(L, (y, x))
    if (x + y) % 2:
        assert v == 0.0
    else:
        assert 0.0 <= v <= walk.overlap(L)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.6, 6.0), st.integers(1, 80))
def test_quadratic_form_of_ball_below_overlap(r, L):
    phi = uniform_ball(r)
    assert 0 < walk.quadratic_form(L, phi) <= walk.overlap(L) + 1e-15
