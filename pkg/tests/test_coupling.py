import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpre2d.coupling import (GAUSSIAN, RADEMACHER, CouplingWindow, Critical, QuasiCritical, SubCritical,
                             chaos_variance, delta_scale, log_mgf, resolve_window, solve_beta)
from dpre2d.walk import overlap


def test_log_mgf_closed_forms():
    assert log_mgf(GAUSSIAN, 1.0) == 0.5
    assert log_mgf(RADEMACHER, 0.0) == 0.0
    assert log_mgf(RADEMACHER, 1.0) == pytest.approx(math.log(math.cosh(1.0)), abs=1e-15)
    assert log_mgf(RADEMACHER, 1.0) == pytest.approx(0.433781, abs=1e-6)
    with pytest.raises(ValueError):
        log_mgf(GAUSSIAN, 100.0)


def test_log_mgf_small_beta():
    for spec in (GAUSSIAN, RADEMACHER):
        b = 1e-3
        assert log_mgf(spec, b) == pytest.approx(b * b / 2, rel=1e-5)


def test_chaos_variance_values():
    for b in (0.1, 0.7, 1.3):
        assert chaos_variance(GAUSSIAN, b) == pytest.approx(math.exp(b * b) - 1, rel=1e-14)
    assert chaos_variance(GAUSSIAN, 0.0) == 0.0
    assert chaos_variance(RADEMACHER, 0.0) == 0.0
    direct = math.cosh(2) / math.cosh(1) ** 2 - 1
    assert chaos_variance(RADEMACHER, 1.0) == pytest.approx(direct, abs=1e-15)
    assert chaos_variance(RADEMACHER, 1.0) == pytest.approx(math.tanh(1.0) ** 2, abs=1e-15)


def test_chaos_variance_small_beta():
    for spec in (GAUSSIAN, RADEMACHER):
        b = 1e-3
        assert abs(chaos_variance(spec, b) / b**2 - 1) < 0.01


def test_solve_beta():
    assert solve_beta(GAUSSIAN, math.e - 1) == pytest.approx(1.0, abs=1e-15)
    t = 1e-9
    assert solve_beta(GAUSSIAN, t) ** 2 == pytest.approx(t, rel=1e-6)
    b = solve_beta(RADEMACHER, chaos_variance(RADEMACHER, 1.0))
    assert b == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        solve_beta(RADEMACHER, 1.0)
    with pytest.raises(ValueError):
        solve_beta(GAUSSIAN, 0.0)


@pytest.mark.parametrize("spec", [GAUSSIAN, RADEMACHER])
def test_round_trip_log_grid(spec):
    top = 0.999 * spec.sup_sigma2() if spec is RADEMACHER else 100.0
    for t in np.geomspace(1e-8, top, 60):
        b = solve_beta(spec, t)
        assert chaos_variance(spec, b) == pytest.approx(t, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("spec", [GAUSSIAN, RADEMACHER])
def test_sigma_strictly_increasing(spec):
    bs = np.linspace(0, 5, 400)
    s = [chaos_variance(spec, b) for b in bs]
    assert np.all(np.diff(s) > 0)


def test_window_identities():
    N = 10**6
    R = overlap(N)
    q = resolve_window(QuasiCritical(4.0), N)
    assert q.sigma2 == (1 - 4 / math.log(N)) / R
    assert abs(chaos_variance(GAUSSIAN, q.beta) - q.sigma2) < 1e-12
    assert q.sigma2 * R == pytest.approx(1 - 4 / math.log(N), abs=1e-15)
    s = resolve_window(SubCritical(1.0), 5000)
    assert s.sigma2 == 1 / overlap(5000)
    c = resolve_window(Critical(0.0), 10**4)
    assert c.sigma2 == 1 / overlap(10**4)
    sub = resolve_window(SubCritical(0.5), 777, RADEMACHER)
    assert sub.sigma2 * overlap(777) == pytest.approx(0.25, abs=1e-15)
    assert abs(chaos_variance(RADEMACHER, sub.beta) - sub.sigma2) < 1e-12


def test_window_errors():
    with pytest.raises(ValueError):
        resolve_window(QuasiCritical(20.0), 1000)
    with pytest.raises(ValueError):
        resolve_window(SubCritical(1.5), 1000)
    with pytest.raises(ValueError):
        resolve_window(Critical(-50.0), 1000)
    with pytest.raises(ValueError):
        resolve_window(Critical(0.0), 1)


def test_window_json_round_trip():
    w = resolve_window(QuasiCritical(3.3), 4096, RADEMACHER)
    d = w.to_dict()
    assert set(d) == {"regime", "N", "theta_N", "beta", "sigma2", "law"}
    w2 = CouplingWindow.from_json(w.to_json())
    assert w2 == w


def test_delta_scale():
    assert delta_scale(1e-12) == pytest.approx(1.0)
    assert delta_scale(4.0) == pytest.approx(math.exp(-2), abs=1e-15)
    assert delta_scale(4.0) == pytest.approx(0.135335, abs=1e-6)
    assert delta_scale(2 * math.log(10)) == pytest.approx(0.1, abs=1e-15)
    with pytest.raises(ValueError):
        delta_scale(0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 30.0), st.floats(0.01, 30.0))
def test_delta_scale_decreasing(a, b):
    if a < b:
        assert delta_scale(a) > delta_scale(b)
    assert 0 < delta_scale(a) < 1
