import math

import numpy as np
import pytest

from dpre2d import rng, sim
from dpre2d.coupling import GAUSSIAN, RADEMACHER, QuasiCritical, SubCritical, resolve_window
from dpre2d.lattice import LatticeField, LatticeWindow, point_mass, uniform_ball
from dpre2d.moments import variance_averaged, variance_restricted

from oracles import partition_by_paths


def _field(sites, weights, pmf=True):
    r = max(max(abs(x), abs(y)) for x, y in sites)
    win = LatticeWindow(r, 0)
    v = np.zeros(win.shape)
    for (x, y), a in zip(sites, weights):
        v[win.index((x, y))] += a
    return LatticeField(win, v, pmf=pmf)


def _weight(cfg, replica, on=None, kill=None):
    beta, lam, _, _ = cfg.weights()

    def w(t, x, y):
        if kill and t in kill and x * x + y * y > kill[t]:
            return 0.0
        if on is not None and not on[t]:
            return 1.0
        om = rng.omega_xy(cfg.law, cfg.seed, replica, t, x, y)
        return math.exp(beta * om - lam)

    return w


WIN_R = resolve_window(SubCritical(0.8), 1000, RADEMACHER)
WIN_G = resolve_window(SubCritical(0.8), 1000, GAUSSIAN)


@pytest.mark.parametrize("N", [1, 2, 3, 4])
@pytest.mark.parametrize("win", [WIN_R, WIN_G], ids=["rademacher", "gaussian"])
def test_engine_matches_path_enumeration(N, win):
    sites, weights = [(0, 0), (1, 1), (2, 0)], [0.5, 0.3, 0.2]
    cfg = sim.SimConfig(N=N, window=win, phi=_field(sites, weights), seed=99)
    for rep in range(100):
        exact = partition_by_paths(N, _weight(cfg, rep), sites, weights)
        assert sim.run_partition(cfg, rep).Z == pytest.approx(exact, rel=1e-12)
        if rep < 10:
            assert sim.run_partition_reference(cfg, rep) == pytest.approx(exact, rel=1e-12)


def test_terminal_weight_matches_enumeration():
    N = 4
    psi_sites = [(0, 0), (2, 0), (1, 1), (-1, 1), (0, 2)]
    psi = _field(psi_sites, [1.0, 0.5, 2.0, 0.25, 3.0], pmf=False)
    cfg = sim.SimConfig(N=N, window=WIN_R, phi=point_mass(), psi=psi, seed=5)
    lookup = {z: psi.at(z) for z in psi_sites}
    for rep in range(20):
        exact = partition_by_paths(N, _weight(cfg, rep), [(0, 0)], [1.0], psi=lambda x, y: lookup.get((x, y), 0.0))
        assert sim.run_partition(cfg, rep).Z == pytest.approx(exact, rel=1e-12)


def test_noise_off_and_diffusive_match_enumeration():
    N = 4
    cfg = sim.SimConfig(N=N, window=WIN_G, phi=point_mass(), noise_off=[(1, 2)], diffusive={2: 2.0, 4: 4.0},
                        seed=17)
    on = [False, True, False, True, True]
    kill = {2: 2.0, 4: 4.0}
    for rep in range(30):
        exact = partition_by_paths(N, _weight(cfg, rep, on, kill), [(0, 0)], [1.0])
        assert sim.run_partition(cfg, rep).Z == pytest.approx(exact, rel=1e-12)
        assert sim.run_partition_reference(cfg, rep) == pytest.approx(exact, rel=1e-12)


def test_beta_zero_is_one():
    cfg = sim.SimConfig(N=2000, phi=uniform_ball(5))
    for rep in range(3):
        assert sim.run_partition(cfg, rep).Z == pytest.approx(1.0, abs=1e-8)
    leak, c = sim.dry_run_leak(cfg)
    assert 0 <= leak < 1e-8
    assert c >= 16


def test_engine_matches_reference_at_moderate_n():
    win = resolve_window(QuasiCritical(2.0), 60, RADEMACHER)
    cfg = sim.SimConfig(N=60, window=win, phi=uniform_ball(2), noise_off=[(10, 25)], seed=3)
    for rep in range(3):
        assert sim.run_partition(cfg, rep).Z == pytest.approx(sim.run_partition_reference(cfg, rep), rel=1e-8)


def test_evolve_row_examples():
    st = sim.PolymerState(0, point_mass())
    s1 = sim.evolve_row(st, None, 0.0)
    assert s1.time == 1
    for z in [(1, 0), (-1, 0), (0, 1), (0, -1)]:
        assert s1.field.at(z) == 0.25
    assert s1.mass == pytest.approx(1.0)
    row = np.zeros((3, 3))
    row[2, 1] = 1.0  # site (1, 0)
    s2 = sim.evolve_row(st, row, 0.5)
    assert s2.field.at((1, 0)) == pytest.approx(0.25 * math.exp(0.5 - 0.125))
    assert s2.field.at((-1, 0)) == pytest.approx(0.25 * math.exp(-0.125))
    with pytest.raises(ValueError):
        sim.evolve_row(st, np.zeros((2, 2)), 0.5)


def test_evolve_row_rescales():
    st = sim.PolymerState(0, point_mass())
    big = sim.PolymerState(0, LatticeField(st.field.window, st.field.values * 1e200))
    out = sim.evolve_row(big, None, 0.0)
    assert out.field.values.max() == 1.0
    assert out.mass == pytest.approx(1e200, rel=1e-12)


def test_run_field_matches_point_runs():
    win = resolve_window(QuasiCritical(2.0), 40, RADEMACHER)
    cfg = sim.SimConfig(N=40, window=win, seed=8)
    f = sim.run_field(cfg, 3, replica=2)
    for z in [(0, 0), (1, 1), (2, 0), (-3, 1), (3, 3)]:
        ref = sim.run_partition_reference(sim.SimConfig(N=40, window=win, phi=point_mass(z), seed=8), 2)
        assert f.at(z) == pytest.approx(ref, rel=1e-7)
    with pytest.raises(ValueError):
        sim.run_field(sim.SimConfig(N=4, window=win, diffusive={2: 2.0}), 1)


def test_threads_do_not_change_results():
    win = resolve_window(QuasiCritical(2.0), 256, RADEMACHER)
    cfg = sim.SimConfig(N=256, window=win, phi=uniform_ball(4), seed=21)
    a = sim.partition_ensemble(cfg, 12, threads=1)
    b = sim.partition_ensemble(cfg, 12, threads=4)
    assert np.array_equal(a, b)
    c = sim.partition_ensemble(cfg, range(6, 12), threads=2)
    assert np.array_equal(a[6:], c)


def test_seed_and_fingerprint():
    win = resolve_window(QuasiCritical(2.0), 64, RADEMACHER)
    a = sim.SimConfig(N=64, window=win, seed=1)
    b = sim.SimConfig(N=64, window=win, seed=2)
    assert a.fingerprint() == sim.SimConfig(N=64, window=win, seed=1).fingerprint()
    assert a.fingerprint() != b.fingerprint()
    assert sim.run_partition(a, 0).Z != sim.run_partition(b, 0).Z


def test_config_validation():
    with pytest.raises(ValueError):
        sim.SimConfig(N=-1)
    with pytest.raises(ValueError):
        sim.SimConfig(N=10, noise_off=[(5, 20)])
    with pytest.raises(ValueError):
        sim.SimConfig(N=10, diffusive={11: 1.0})
    odd = LatticeField(LatticeWindow(1, 1), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        sim.SimConfig(N=10, phi=odd)


def test_monte_carlo_variance_matches_exact():
    N = 128
    win = resolve_window(QuasiCritical(2.0), N, RADEMACHER)
    phi = uniform_ball(3)
    cfg = sim.SimConfig(N=N, window=win, phi=phi, noise_off=[(20, 60)], seed=4)
    Z = sim.partition_ensemble(cfg, 1500, threads=4)
    exact = variance_restricted(win.sigma2, N, phi, [(20, 60)])
    var = Z.var(ddof=1)
    se_var = math.sqrt(np.mean((Z - Z.mean()) ** 4) - var**2) / math.sqrt(len(Z))
    assert abs(Z.mean() - 1.0) < 4 * Z.std() / math.sqrt(len(Z))
    assert abs(var - exact) < 4 * se_var
    assert exact < variance_averaged(win.sigma2, N, phi)


def test_ladder_construction():
    lad = sim.build_scale_ladder(4096, 1.0, 6.0, 4, log_power=0.5)
    seq = [0]
    for i in range(1, 5):
        seq += [int(lad.Nt_i[i]), int(lad.N_i[i])]
    assert all(a < b for a, b in zip(seq, seq[1:]))
    assert lad.N == 4096
    assert all(x % 2 == 0 for x in seq)
    assert lad.noise_off() == tuple((int(lad.Nt_i[i]), int(lad.N_i[i])) for i in range(1, 5))
    assert lad.to_dict()["N_i"][-1] == 4096
    with pytest.raises(sim.LadderError):
        sim.build_scale_ladder(4096, 1.0, 6.0, 4, log_power=3.0)
    with pytest.raises(ValueError):
        sim.build_scale_ladder(4095, 1.0, 6.0, 4)
    with pytest.raises(ValueError):
        sim.build_scale_ladder(4096, 1.0, 0.0, 4)


def _small_multiscale(theta=6.0, seed=0, beta=True, N=1024, M=3):
    lad = sim.build_scale_ladder(N, 1.0, theta, M, log_power=0.5)
    win = resolve_window(QuasiCritical(theta), N, RADEMACHER) if beta else None
    cfg = sim.SimConfig(N=N, window=win, phi=uniform_ball(3), noise_off=lad.noise_off(),
                        diffusive=lad.diffusive_events(), seed=seed)
    return cfg, lad


def test_multiscale_telescopes():
    cfg, lad = _small_multiscale()
    for rep in range(4):
        rec = sim.run_multiscale(cfg, lad, rep)
        assert not rec.dead
        assert rec.telescope_error() < 1e-12
        assert np.all((rec.m[1:] > 0) & (rec.m[1:] <= 1))
        assert rec.logZ[-1] == pytest.approx(sim.run_partition(cfg, rep).logZ, abs=1e-10)
        js = rec.to_json()
        assert len(js["deltas"]) == lad.M


def test_multiscale_without_disorder():
    cfg, lad = _small_multiscale(theta=3.0, beta=False, N=256, M=2)
    rec = sim.run_multiscale(cfg, lad, 0, keep_fields=True)
    assert np.max(np.abs(rec.delta[1:])) < 1e-12
    # the product of the conditional means is the noise-free constrained mass
    ref = sim.run_partition_reference(cfg)
    assert math.exp(math.fsum(np.log(rec.m[1:]))) == pytest.approx(ref, rel=1e-8)
    f, dom = sim.endpoint_distribution(rec, 1)
    assert f.total() == pytest.approx(1.0)
    assert dom > 0
    with pytest.raises(ValueError):
        sim.endpoint_distribution(sim.run_multiscale(cfg, lad, 0), 1)


def test_conditional_means_approach_one():
    # m_i is a noise-free walk probability, so beta = 0 gives the exact values
    from dpre2d.experiments import ball_radius
    N, lows = 4096, []
    for th in (4.0, 6.0, 8.0):
        lad = sim.build_scale_ladder(N, 1.0, th, 4, 0.5)
        phi = uniform_ball(ball_radius(N, th))
        rec = sim.run_multiscale(sim.multiscale_config(N, None, lad, phi, seed=1), lad, 0)
        lows.append(float(rec.m[1:].min()))
    assert min(lows) >= 0.9
    assert lows == sorted(lows)


def test_multiscale_rejects_mismatched_config():
    cfg, lad = _small_multiscale()
    with pytest.raises(ValueError):
        sim.run_multiscale(sim.SimConfig(N=cfg.N, window=cfg.window), lad)


def test_multiscale_threads():
    cfg, lad = _small_multiscale(seed=3)
    a = sim.multiscale_ensemble(cfg, lad, 4, threads=1)
    b = sim.multiscale_ensemble(cfg, lad, 4, threads=4)
    for x, y in zip(a, b):
        assert np.array_equal(x.delta, y.delta)
