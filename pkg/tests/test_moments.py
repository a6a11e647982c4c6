import math
from fractions import Fraction

import numpy as np
import pytest

from dpre2d import moments
from dpre2d.lattice import LatticeField, LatticeWindow, point_mass, uniform_ball
from dpre2d.walk import overlap

from oracles import chaos_variance


def _field(sites, weights):
    r = max(max(abs(x), abs(y)) for x, y in sites)
    win = LatticeWindow(r, 0)
    v = np.zeros(win.shape)
    for (x, y), a in zip(sites, weights):
        v[win.index((x, y))] += a
    return LatticeField(win, v, pmf=True)


def test_renewal_first_values():
    s = 0.3
    U = moments.renewal_function(s, 3).U
    assert U[0] == 1.0
    assert U[1] == pytest.approx(s / 4, abs=1e-16)
    assert U[2] == pytest.approx(s * 9 / 64 + s * s / 16, abs=1e-16)


def test_beta_zero():
    assert np.array_equal(moments.renewal_function(0.0, 50).U, np.r_[1.0, np.zeros(50)])
    assert moments.variance_averaged(0.0, 30, uniform_ball(3)) == 0.0
    assert moments.second_moment_p2p(0.0, 100) == 1.0


def test_renewal_csv():
    t = moments.renewal_function(0.2, 4)
    lines = t.to_csv().strip().split("\n")
    assert lines[0] == "n,U,barU"
    assert len(lines) == 6
    assert float(lines[-1].split(",")[2]) == t.barU[-1]


def test_direct_and_fft_agree():
    s = 0.9 / overlap(4000)
    a = moments.renewal_function(s, 4000, "direct").U
    b = moments.renewal_function(s, 4000, "fft").U
    assert np.max(np.abs(a - b) / np.abs(a)) < 1e-12


def test_volterra_generic_against_loop():
    rng = np.random.default_rng(3)
    c, g = rng.random(700), rng.random(700)
    K = np.r_[0.0, [float(Fraction(math.comb(2 * n, n) ** 2, 16**n)) for n in range(1, 700)]]
    X = np.empty(700)
    for j in range(700):
        X[j] = c[j] + 0.4 * sum(K[j - i] * g[i] * X[i] for i in range(j))
    for m in ("direct", "fft"):
        assert np.allclose(moments.volterra_solve(c, g, 0.4, m), X, rtol=1e-12, atol=0)
    with pytest.raises(ValueError):
        moments.volterra_solve(c, g, 0.4, "bogus")


def _random_case(rng):
    L = int(rng.integers(1, 6))
    k = int(rng.integers(1, 3))
    sites = []
    while len(sites) < k:
        z = tuple(int(a) for a in rng.integers(-2, 3, size=2))
        if sum(z) % 2 == 0 and z not in sites:
            sites.append(z)
    w = rng.random(k)
    return L, sites, w / w.sum(), float(rng.uniform(0.05, 1.5))


def test_variance_matches_chaos_enumeration():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        L, sites, w, s = _random_case(rng)
        exact = chaos_variance(sites, w, L, s)
        got = moments.variance_averaged(s, L, _field(sites, w))
        assert got == pytest.approx(exact, rel=1e-12, abs=1e-15)


def test_restricted_matches_chaos_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(25):
        L, sites, w, s = _random_case(rng)
        L = max(L, 2)
        a = int(rng.integers(0, L))
        b = int(rng.integers(a + 1, L + 1))
        on = [False] + [not (a < t <= b) for t in range(1, L + 1)]
        exact = chaos_variance(sites, w, L, s, on=on)
        got = moments.variance_restricted(s, L, _field(sites, w), [(a, b)])
        assert got == pytest.approx(exact, rel=1e-12, abs=1e-15)


def test_restricted_without_gaps_is_averaged():
    phi = uniform_ball(4)
    s = 0.8 / overlap(300)
    assert moments.variance_restricted(s, 300, phi) == pytest.approx(moments.variance_averaged(s, 300, phi), rel=1e-12)
    assert moments.variance_restricted(s, 10, phi, [(0, 10)]) == 0.0


def test_noise_interval_validation():
    with pytest.raises(ValueError):
        moments.noise_mask([(3, 2)], 10)
    with pytest.raises(ValueError):
        moments.noise_mask([(0, 5), (4, 8)], 10)
    with pytest.raises(ValueError):
        moments.noise_mask([(5, 11)], 10)
    on = moments.noise_mask([(2, 4)], 6)
    assert on.tolist() == [False, True, True, False, False, True, True]


def test_variance_sandwich():
    for L, r in [(50, 0), (400, 3), (2000, 10)]:
        phi = uniform_ball(r) if r else point_mass()
        s = 0.9 / overlap(L)
        lo, hi = moments.variance_bounds(s, L, phi)
        v = moments.variance_averaged(s, L, phi)
        assert lo <= v <= hi


def test_point_mass_variance_is_second_moment_minus_one():
    s = 0.7 / overlap(500)
    assert moments.variance_averaged(s, 500, point_mass()) == pytest.approx(moments.second_moment_p2p(s, 500) - 1, rel=1e-12)


def test_bracket_ratio():
    N = 2**16
    prev = 0.0
    for th in (1.0, 2.0, 4.0, 8.0):
        r = moments.p2p_bracket_ratio(N, th, N)
        assert 0 < r <= 1
        assert r > prev
        prev = r


def test_renewal_mc_unbiased():
    N, th, L = 2**12, 3.0, 2**10
    x = 1 - th / math.log(N)
    exact = moments.second_moment_p2p(x / overlap(N), L)
    for est, reps in (("weighted", 20000), ("geometric", 20000)):
        mc = moments.renewal_mc_estimate(N, th, L, reps, seed=11, estimator=est)
        assert abs(mc.value - exact) < 4 * mc.se
    w = moments.renewal_mc_estimate(N, th, L, 20000, seed=11)
    g = moments.renewal_mc_estimate(N, th, L, 20000, seed=11, estimator="geometric")
    assert w.se < g.se


def test_renewal_mc_errors():
    with pytest.raises(ValueError):
        moments.renewal_mc_estimate(100, 10.0, 10, 5, 0)
    with pytest.raises(ValueError):
        moments.renewal_mc_estimate(100, 1.0, 200, 5, 0)
    with pytest.raises(ValueError):
        moments.renewal_mc_estimate(100, 1.0, 10, 5, 0, estimator="x")


def test_lower_bound_holds_when_applicable():
    seen = 0
    for L in (100, 1000):
        for lam in (0.5, 5.0, 50.0):
            for f in (0.2, 0.5, 0.9):
                res = moments.lower_bound_check(f / overlap(L), L, lam)
                if res.applicable:
                    seen += 1
                    assert res.holds
    assert seen > 0
    assert not moments.lower_bound_check(0.999 / overlap(10), 10, 0.0).applicable


def test_choice_inequality_on_grid():
    for L, k in ((10, 200), (100, 200), (1000, 200), (10_000, 20)):
        for lam in np.linspace(1e-3, L, k):
            assert moments.choice_inequality_gap(L, lam) >= 0
    assert moments.choice_inequality_gap(10, 0) == math.inf
    with pytest.raises(ValueError):
        moments.choice_inequality_gap(10, 11)


def test_spread_check():
    N = 2**14
    W = N / 16
    phi = uniform_ball(math.sqrt(W))
    rep = moments.spread_condition_check(phi, N, W, math.sqrt(math.log(N)))
    assert rep.passed
    assert rep.target == pytest.approx(math.log(16))
    concentrated = moments.spread_condition_check(point_mass(), N, W, math.sqrt(math.log(N)))
    assert not concentrated.passed
    with pytest.raises(ValueError):
        moments.spread_condition_check(phi, 10, 20, 1.0)


def test_spread_log_sum_fft_path_matches_direct():
    phi = uniform_ball(10)
    d = moments.spread_condition_check(phi, 5000, 100, 2.0).log_sum
    assert moments._log_sum_fft(phi, 5000) == pytest.approx(d, rel=1e-10)


def test_variance_limit_predictions():
    assert moments.predicted_variance_limit(0.0, 0.7) == pytest.approx(0.7)
    assert moments.predicted_variance_limit(0.5, 0.5) == 0.0
    assert moments.predicted_variance_limit(0.2, 1.0) == pytest.approx(0.8 / 1.2)
    assert moments.predicted_variance_limit(0.2, 1.0, "sub-critical", 0.5) == pytest.approx(0.8 * 0.25 / 1.05)
    with pytest.raises(ValueError):
        moments.predicted_variance_limit(0.8, 0.5)


def test_multiscale_predictions():
    M, rho = 4, 1.0
    p = [moments.multiscale_variance_prediction(M, i, rho) for i in range(1, M + 1)]
    assert p == pytest.approx([1 / 7, 1 / 6, 1 / 5, 1 / 4])
    assert moments.multiscale_variance_prediction(M, M, 3.0) == pytest.approx(3.0 / M)
    with pytest.raises(ValueError):
        moments.multiscale_variance_prediction(M, 0, rho)


@pytest.mark.parametrize("rho", [0.25, 1.0, 4.0])
def test_riemann_sum_converges_to_log(rho):
    assert moments.multiscale_variance_total(10_000, rho) == pytest.approx(math.log1p(rho), abs=1e-3)


def test_variance_monotone_in_coupling_and_horizon():
    phi = uniform_ball(3)
    base = 1 / overlap(400)
    by_s = [moments.variance_averaged(f * base, 400, phi) for f in (0.1, 0.4, 0.7, 0.95)]
    assert np.all(np.diff(by_s) > 0)
    by_L = [moments.variance_averaged(0.5 * base, L, phi) for L in (10, 50, 200, 400)]
    assert np.all(np.diff(by_L) > 0)


def test_projection_inequality():
    rng = np.random.default_rng(12)
    phi = uniform_ball(2)
    s = 0.8 / overlap(200)
    full = moments.variance_averaged(s, 200, phi)
    for _ in range(20):
        a = int(rng.integers(0, 199))
        b = int(rng.integers(a + 1, 201))
        assert moments.variance_restricted(s, 200, phi, [(a, b)]) < full
    assert moments.variance_restricted(0.0, 200, phi, [(3, 9)]) == 0.0
