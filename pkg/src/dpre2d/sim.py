"""Transfer-matrix Monte Carlo for polymer partition functions.

For a fixed disorder realization the partition function is computed
exactly by evolving the field ``n -> Z_{(0,n]}(phi, .)`` one time step at a
time: average over the four neighbours, then multiply by the disorder
weight ``exp(beta omega(n, x) - lambda(beta))``.  Disorder is never stored;
it is regenerated on demand from the counter-based generator in `rng`.

Two devices keep the sweeps cheap and exact:

* Truncation.  After step ``n`` only the rotated disk
  ``u^2 + v^2 <= (r_0 + sqrt(2 n c))^2`` is kept.  A noise-free dry run
  measures the mass lost this way and grows ``c`` until the loss is below
  ``leak_bound``.
* Noise-free stretches.  When the disorder is switched off on a long time
  interval, the walk kernel is applied in one shot by separable FFT
  convolution with the one-dimensional kernel.
"""
from __future__ import annotations

import hashlib
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from . import _engine as eng
from . import rng
from .coupling import CouplingWindow, Law, log_mgf
from .lattice import LatticeField, LatticeWindow, from_rotated, point_mass, rotated_coords, to_rotated
from .moments import noise_mask
from .walk import binomial_kernel


class LeakError(RuntimeError):
    """Truncation loses more mass than allowed even after growing the window."""


class LadderError(ValueError):
    """Scale ladder violates the required strict separation."""


def even_floor(a: float) -> int:
    """``[[a]] = 2 floor(a / 2)``."""
    return 2 * int(math.floor(a / 2.0))


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    """Everything that determines one ensemble of partition functions.

    Parameters
    ----------
    N : int
        Horizon (number of disorder rows).
    window : CouplingWindow or None
        Resolved coupling; ``None`` means ``beta = 0``.
    phi : LatticeField
        Initial law (pmf on the even sublattice).
    psi : LatticeField, optional
        Terminal weight; ``None`` means ``psi = 1``.
    noise_off : tuple of (a, b)
        Half-open time intervals ``(a, b]`` with the disorder switched off.
    diffusive : dict
        Times ``m`` mapped to ``r^2``: paths are killed unless ``|S_m|^2 <= r^2``.
    seed : int
        64-bit seed of the disorder generator.
    leak_c : float
        Initial truncation constant ``c``.
    leak_bound : float
        Maximal noise-free mass loss.
    jump_min : int
        Noise-free stretches at least this long are applied by FFT.
    """

    N: int
    window: CouplingWindow | None = None
    phi: LatticeField = field(default_factory=point_mass)
    psi: LatticeField | None = None
    noise_off: tuple = ()
    diffusive: tuple = ()
    seed: int = 0
    leak_c: float = 16.0
    leak_bound: float = 1e-8
    jump_min: int = 64

    def __post_init__(self):
        if self.N < 0:
            raise ValueError("N must be >= 0")
        if self.phi.window.parity != 0:
            raise ValueError("initial law must live on the even sublattice")
        object.__setattr__(self, "noise_off", tuple((int(a), int(b)) for a, b in self.noise_off))
        if isinstance(self.diffusive, dict):
            object.__setattr__(self, "diffusive", tuple(sorted(self.diffusive.items())))
        object.__setattr__(self, "diffusive", tuple((int(m), float(r2)) for m, r2 in self.diffusive))
        noise_mask(self.noise_off, self.N)  # validates the intervals
        for m, r2 in self.diffusive:
            if not 0 < m <= self.N or r2 < 0:
                raise ValueError(f"diffusive event at time {m} with r^2={r2} is invalid")

    # ------------------------------------------------------------------
    @property
    def beta(self) -> float:
        return 0.0 if self.window is None else self.window.beta

    @property
    def law(self) -> int:
        if self.window is None or self.window.beta == 0.0:
            return rng.LAW_NONE
        return rng.LAW_RADEMACHER if self.window.spec.law is Law.RADEMACHER else rng.LAW_GAUSSIAN

    def weights(self):
        """``(beta, lambda, w+, w-)`` for the engine."""
        if self.law == rng.LAW_NONE:
            return 0.0, 0.0, 1.0, 1.0
        b = self.window.beta
        lam = log_mgf(self.window.spec, b)
        return b, lam, math.exp(b - lam), math.exp(-b - lam)

    def fingerprint(self) -> str:
        d = config_to_dict(self)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def config_to_dict(cfg: SimConfig) -> dict:
    def fld(f):
        if f is None:
            return None
        return {"radius": f.window.radius, "parity": f.window.parity,
                "offset": list(f.window.origin_offset), "values": f.values.tolist()}

    return {
        "N": cfg.N,
        "window": None if cfg.window is None else cfg.window.to_dict(),
        "phi": fld(cfg.phi),
        "psi": fld(cfg.psi),
        "noise_off": [list(p) for p in cfg.noise_off],
        "diffusive": [list(p) for p in cfg.diffusive],
        "seed": cfg.seed,
        "leak_c": cfg.leak_c,
        "leak_bound": cfg.leak_bound,
        "jump_min": cfg.jump_min,
    }


# ---------------------------------------------------------------------------
# scale ladder
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaleLadder:
    """Times ``0 = N_0 < Ntilde_1 < N_1 < ... < Ntilde_M < N_M = N``."""

    M: int
    N_i: np.ndarray  # N_0..N_M
    Nt_i: np.ndarray  # Ntilde_1..Ntilde_M (index 0 unused, set to 0)
    rho: float
    theta_N: float
    log_power: float = 3.0

    @property
    def N(self) -> int:
        return int(self.N_i[-1])

    def noise_off(self) -> tuple:
        return tuple((int(self.Nt_i[i]), int(self.N_i[i])) for i in range(1, self.M + 1)
                     if self.N_i[i] > self.Nt_i[i])

    def diffusive_events(self) -> dict:
        """``|S_m|^2 <= m |theta_N|`` at ``m = Ntilde_i`` and ``m = N_i``."""
        t = abs(self.theta_N)
        ev = {}
        for i in range(1, self.M + 1):
            for m in (int(self.Nt_i[i]), int(self.N_i[i])):
                ev[m] = m * t
        return ev

    def to_dict(self) -> dict:
        return {"M": self.M, "N_i": [int(x) for x in self.N_i], "Nt_i": [int(x) for x in self.Nt_i],
                "rho": self.rho, "theta_N": self.theta_N, "log_power": self.log_power}


def ladder_scales(N: int, rho: float, theta_N: float, M: int, log_power: float = 3.0):
    """Raw ladder ``N_i = [[N exp(-rho |theta| (1 - i/M))]]``, ``Nt_i = [[N_i / (rho |theta|)^p]]``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    L = rho * abs(theta_N)  # log(1 / delta_N^{2 rho})
    Ni = np.zeros(M + 1, dtype=np.int64)
    Nt = np.zeros(M + 1, dtype=np.int64)
    for i in range(1, M + 1):
        Ni[i] = even_floor(N * math.exp(-L * (1.0 - i / M))) if i < M else even_floor(N)
        Nt[i] = even_floor(Ni[i] / L**log_power)
    return Ni, Nt


def build_scale_ladder(N: int, rho: float, theta_N: float, M: int, log_power: float = 3.0) -> ScaleLadder:
    """Scale ladder with strict separation, or `LadderError` naming the first violated gap."""
    if N % 2:
        raise ValueError("N must be even")
    if rho <= 0 or theta_N == 0:
        raise ValueError("need rho > 0 and theta_N != 0")
    Ni, Nt = ladder_scales(N, rho, theta_N, M, log_power)
    seq = [("N_0", 0)]
    for i in range(1, M + 1):
        seq += [(f"Ntilde_{i}", int(Nt[i])), (f"N_{i}", int(Ni[i]))]
    for (na, a), (nb, b) in zip(seq, seq[1:]):
        if not a < b:
            raise LadderError(f"separation fails: {na}={a} is not < {nb}={b}")
    return ScaleLadder(M, Ni, Nt, float(rho), float(theta_N), float(log_power))


# ---------------------------------------------------------------------------
# reference single-step evolution in original coordinates
# ---------------------------------------------------------------------------

@dataclass
class PolymerState:
    """Field ``Z_{(0,n]}(phi, x)`` in original coordinates, scaled by ``exp(log_offset)``."""

    time: int
    field: LatticeField
    log_offset: float = 0.0

    @property
    def mass(self) -> float:
        return self.field.total() * math.exp(self.log_offset)


def evolve_row(state: PolymerState, disorder_row, beta: float, noise_on: bool = True, lam: float | None = None,
               spec=None, rescale: bool = True) -> PolymerState:
    """One time step: average over the four neighbours, then multiply by ``exp(beta omega - lambda)``.

    ``disorder_row`` is an array on the (radius + 1) window of the new time;
    the window grows by one each step so no mass is truncated.
    """
    win = state.field.window
    r = win.radius + 1
    old = state.field.resized(r).values
    new = np.zeros_like(old)
    new[1:, :] += old[:-1, :]
    new[:-1, :] += old[1:, :]
    new[:, 1:] += old[:, :-1]
    new[:, :-1] += old[:, 1:]
    new *= 0.25
    par = None if win.parity is None else 1 - win.parity
    if noise_on and beta != 0.0:
        w = np.asarray(disorder_row, dtype=float)
        if w.shape != new.shape:
            raise ValueError(f"disorder row shape {w.shape} does not cover the window {new.shape}")
        if lam is None:
            lam = log_mgf(spec, beta) if spec is not None else 0.5 * beta * beta
        new = new * np.exp(beta * w - lam)
    if not np.all(np.isfinite(new)):
        raise FloatingPointError(f"non-finite value at row {state.time + 1}")
    off = state.log_offset
    if rescale:
        mx = new.max()
        if mx > eng.HUGE or (0 < mx < eng.TINY):
            new /= mx
            off += math.log(mx)
    return PolymerState(state.time + 1, LatticeField(LatticeWindow(r, par, win.origin_offset), new), off)


# ---------------------------------------------------------------------------
# compiled sweep orchestration
# ---------------------------------------------------------------------------

def _rot_r2(phi: LatticeField) -> int:
    sup = phi.support()
    if len(sup) == 0:
        return 0
    u = sup[:, 0] + sup[:, 1]
    v = sup[:, 0] - sup[:, 1]
    return int((u * u + v * v).max())


def _rot_extent(phi: LatticeField) -> int:
    sup = phi.support()
    if len(sup) == 0:
        return 0
    return int(max(np.abs(sup[:, 0] + sup[:, 1]).max(), np.abs(sup[:, 0] - sup[:, 1]).max()))


@dataclass
class _Plan:
    """Per-time schedule shared by all replicas of a configuration."""

    N: int
    H: int
    c: float
    on: np.ndarray  # bool[0..N]
    R2: np.ndarray  # int64[0..N], truncation intersected with diffusive events
    events: dict  # time -> r2 in rotated units (int)
    is_event: np.ndarray


def _truncation_r2(N: int, r0: float, ext0: int, c: float) -> np.ndarray:
    n = np.arange(N + 1, dtype=float)
    R = (r0 + np.sqrt(2.0 * n * c)) ** 2
    cap = 2.0 * (ext0 + n) ** 2
    return np.floor(np.minimum(R, cap) + 1e-9).astype(np.int64)


def _noise_on(cfg: SimConfig) -> np.ndarray:
    on = noise_mask(cfg.noise_off, cfg.N)
    if cfg.law == rng.LAW_NONE:
        on[:] = False
    return on


def _make_plan(cfg: SimConfig, c: float, use_events: bool = True, backward_r0: float | None = None,
               on: np.ndarray | None = None) -> _Plan:
    N = cfg.N
    if backward_r0 is None:
        r0 = math.sqrt(_rot_r2(cfg.phi))
        ext0 = _rot_extent(cfg.phi)
    else:
        r0 = backward_r0
        ext0 = int(math.ceil(backward_r0))
    R2 = _truncation_r2(N, r0, ext0, c)
    events = {}
    if use_events:
        for m, r2 in cfg.diffusive:
            e = int(math.floor(2.0 * r2 + 1e-12))
            events[m] = e
            R2[m] = min(R2[m], e)
    if on is None:
        on = _noise_on(cfg)
    H = eng.isqrt(int(R2.max())) // 2 + 3
    is_event = np.zeros(N + 1, dtype=bool)
    for m in events:
        is_event[m] = True
    return _Plan(N, H, c, on, R2, events, is_event)


class _Sweeper:
    """Mutable rotated state plus the bookkeeping needed to advance it."""

    def __init__(self, H: int, arr: np.ndarray, par: int, time: int):
        S = 2 * H + 1
        self.H = H
        self.buf = np.zeros((2, S, S))
        self.buf[0] = arr
        self.ext = np.empty((2, 2, S), dtype=np.int64)
        self.ext[:, 0, :] = 0
        self.ext[:, 1, :] = S - 1
        self.ext[1, 0, :] = 1
        self.ext[1, 1, :] = 0
        self.cur = 0
        self.par = par
        self.time = time
        self.logoff = 0.0
        self.dead = False
        self._refresh_extent(np.iinfo(np.int64).max // 4)

    @property
    def arr(self) -> np.ndarray:
        return self.buf[self.cur]

    def _refresh_extent(self, R2: int):
        eng.clip_disk(self.buf[self.cur], self.ext[self.cur, 0], self.ext[self.cur, 1], self.par, self.H, R2)

    def total(self) -> float:
        return eng.masked_sum(self.buf[self.cur], self.ext[self.cur, 0], self.ext[self.cur, 1])

    def log_total(self) -> float:
        s = self.total()
        return -math.inf if s <= 0 else math.log(s) + self.logoff

    def step(self, dtime: np.ndarray, R2s: np.ndarray, cfg: SimConfig, key):
        beta, lam, wp, wm = cfg.weights()
        cur, par, logoff, status = eng.advance(self.buf, self.ext, self.cur, self.par, self.H,
                                               dtime, R2s, cfg.law, key, beta, lam, wp, wm, self.logoff)
        self.cur, self.par, self.logoff = cur, par, logoff
        if status:
            self.dead = True

    def jump(self, T: int, R2: int):
        """Apply ``T`` noise-free steps exactly, then keep the disk ``R2``."""
        if T == 0:
            self._refresh_extent(R2)
            return
        a = self.buf[self.cur]
        p, q = self.par, (self.par + T) % 2
        S = a.shape[0]
        dmin = math.ceil((-T + q - p) / 2)
        dmax = math.floor((T + q - p) / 2)
        dmin_c, dmax_c = max(dmin, -(S - 1)), min(dmax, S - 1)
        d = np.arange(dmin_c, dmax_c + 1)
        pT = binomial_kernel(T, T)
        k = pT[2 * d - q + p + T]
        out = signal.fftconvolve(a, k[:, None], mode="full", axes=0)
        out = out[-dmin_c:-dmin_c + S, :]
        out = signal.fftconvolve(out, k[None, :], mode="full", axes=1)
        out = out[:, -dmin_c:-dmin_c + S]
        np.maximum(out, 0.0, out=out)  # FFT round-off can leave tiny negatives
        self.buf[self.cur] = out
        self.par = q
        self.time += T
        self._refresh_extent(R2)
        mx = out.max()
        if mx == 0.0:
            self.dead = True
        elif mx > eng.HUGE or mx < eng.TINY:
            out /= mx
            self.logoff += math.log(mx)


def _forward(sw: _Sweeper, plan: _Plan, cfg: SimConfig, key, t_end: int):
    """Advance a forward sweep from ``sw.time`` to ``t_end``.

    Noise-free runs of at least ``jump_min`` steps that do not straddle a
    diffusive event are applied by `_Sweeper.jump`; everything else is
    batched into compiled steps.
    """
    on, is_ev = plan.on, plan.is_event

    def off_end(n):
        b = n
        while b < t_end and not on[b + 1]:
            b += 1
            if is_ev[b]:
                break
        return b

    n = sw.time
    while n < t_end and not sw.dead:
        b = off_end(n)
        if b - n >= cfg.jump_min:
            sw.jump(b - n, int(plan.R2[b]))
            n = b
            continue
        s = n
        while s < t_end:
            b = off_end(s)
            if b - s >= cfg.jump_min:
                break
            s = max(b, s + 1)
        ts = np.arange(n + 1, s + 1)
        dtime = np.where(on[ts], ts, -1).astype(np.int64)
        sw.step(dtime, plan.R2[ts].copy(), cfg, key)
        n = s
    sw.time = n
    return sw


_DRY_CACHE: dict = {}
_DRY_LOCK = threading.Lock()


def _calibrated_plan(cfg: SimConfig) -> _Plan:
    """Plan whose truncation loses less than ``leak_bound`` in a noise-free dry run."""
    base = replace(cfg, window=None, diffusive=(), psi=None)
    key = (base.fingerprint(), cfg.law == rng.LAW_NONE)
    with _DRY_LOCK:
        c = _DRY_CACHE.get(key)
    if c is None:
        c = cfg.leak_c
        for _ in range(12):
            plan = _make_plan(base, c, use_events=False, on=_noise_on(cfg))
            arr = to_rotated(cfg.phi, 0, plan.H)
            sw = _Sweeper(plan.H, arr, 0, 0)
            _forward(sw, plan, base, np.uint64(0), cfg.N)
            leak = 1.0 - sw.total() * math.exp(sw.logoff)
            if leak < cfg.leak_bound:
                break
            c *= 1.25
        else:
            raise LeakError(f"truncation leak {leak:.3e} above {cfg.leak_bound:g} at c={c:.3g}")
        with _DRY_LOCK:
            _DRY_CACHE[key] = c
    plan = _make_plan(cfg, c)
    return plan


def dry_run_leak(cfg: SimConfig) -> tuple[float, float]:
    """Noise-free truncation leak and the calibrated truncation constant ``c``."""
    plan = _calibrated_plan(cfg)
    base = replace(cfg, window=None, diffusive=(), psi=None)
    p0 = _make_plan(base, plan.c, use_events=False, on=_noise_on(cfg))
    sw = _Sweeper(p0.H, to_rotated(cfg.phi, 0, p0.H), 0, 0)
    _forward(sw, p0, base, np.uint64(0), cfg.N)
    return 1.0 - sw.total() * math.exp(sw.logoff), plan.c


# ---------------------------------------------------------------------------
# public runs
# ---------------------------------------------------------------------------

@dataclass
class PartitionResult:
    Z: float
    logZ: float
    replica: int
    endpoint: LatticeField | None = None
    log_offset: float = 0.0


def _key(seed: int, replica: int) -> np.uint64:
    return rng.stream_key(seed, replica)


def _psi_rot(cfg: SimConfig, H: int, par: int) -> np.ndarray | None:
    if cfg.psi is None:
        return None
    return to_rotated(cfg.psi, par, H)


def run_partition(cfg: SimConfig, replica: int = 0, keep_endpoint: bool = False) -> PartitionResult:
    """``Z_N(phi, psi)`` for the disorder of ``(cfg.seed, replica)``."""
    plan = _calibrated_plan(cfg)
    key = _key(cfg.seed, replica)
    sw = _Sweeper(plan.H, to_rotated(cfg.phi, 0, plan.H), 0, 0)
    _forward(sw, plan, cfg, key, cfg.N)
    return _finish(sw, cfg, replica, keep_endpoint)


def _finish(sw: _Sweeper, cfg: SimConfig, replica: int, keep_endpoint: bool) -> PartitionResult:
    if sw.dead:
        return PartitionResult(0.0, -math.inf, replica, None, sw.logoff)
    psi = _psi_rot(cfg, sw.H, sw.par)
    s = sw.total() if psi is None else float(np.sum(sw.arr * psi))
    logZ = math.log(s) + sw.logoff if s > 0 else -math.inf
    ep = None
    if keep_endpoint:
        ep = from_rotated(sw.arr * math.exp(sw.logoff), sw.par)
    return PartitionResult(math.exp(logZ) if s > 0 else 0.0, logZ, replica, ep, sw.logoff)


def centered(f: LatticeField) -> LatticeField:
    """Re-embed a field in a window centred at the origin."""
    sup = f.support()
    r = int(np.abs(sup).max()) if len(sup) else 0
    win = LatticeWindow(r, f.window.parity)
    vals = np.zeros(win.shape)
    nz = f.values != 0.0
    vals[sup[:, 0] + r, sup[:, 1] + r] = f.values[nz]
    return LatticeField(win, vals, f.pmf, dict(f.meta))


def run_partition_reference(cfg: SimConfig, replica: int = 0, disorder=None) -> float:
    """Partition function by `evolve_row` in original coordinates, without truncation.

    ``disorder(t, radius)`` may supply the disorder row of time ``t``; by
    default it is drawn from the counter-based generator.  Meant for small N.
    """
    st = PolymerState(0, centered(cfg.phi))
    beta, lam, _, _ = cfg.weights()
    on = noise_mask(cfg.noise_off, cfg.N)
    killed = dict(cfg.diffusive)
    for t in range(1, cfg.N + 1):
        r = st.field.window.radius + 1
        if disorder is not None:
            row = np.asarray(disorder(t, r), dtype=float)
        elif cfg.law != rng.LAW_NONE:
            row = rng.disorder_row(cfg.law, cfg.seed, replica, t, r)
        else:
            row = None
        st = evolve_row(st, row, beta, bool(on[t]) and row is not None, lam=lam)
        if t in killed:
            X, Y = st.field.window.coords()
            st.field.values[X * X + Y * Y > killed[t]] = 0.0
    vals = st.field.values
    if cfg.psi is not None:
        X, Y = st.field.window.coords()
        w = np.array([cfg.psi.at((x, y)) for x, y in zip(X.ravel(), Y.ravel())]).reshape(X.shape)
        vals = vals * w
    return float(vals.sum() * math.exp(st.log_offset))


def run_field(cfg: SimConfig, radius: int, replica: int = 0) -> LatticeField:
    """``Z_N(x)`` for every even ``x`` with ``|x|_inf <= radius`` from one backward sweep.

    The terminal condition is ``psi`` (default 1); starting points play the
    role of ``phi``.
    """
    if cfg.diffusive:
        raise ValueError("backward sweeps do not support diffusive events")
    c = _field_c(cfg, radius)
    # |x|_inf <= radius means u^2 + v^2 <= 4 radius^2
    plan = _make_plan(cfg, c, use_events=False, backward_r0=2.0 * radius)
    key = _key(cfg.seed, replica)
    return _backward(cfg, plan, key, radius)


def _backward(cfg: SimConfig, plan: _Plan, key, radius: int) -> LatticeField:
    N = cfg.N
    H = plan.H
    S = 2 * H + 1
    on = plan.on
    parN = N % 2
    if cfg.psi is None:
        arr = np.zeros((S, S))
        U, V = rotated_coords(H, parN)
        arr[U * U + V * V <= plan.R2[N]] = 1.0
    else:
        arr = to_rotated(cfg.psi, parN, H)
    sw = _Sweeper(H, arr, parN, N)
    sw._refresh_extent(int(plan.R2[N]))
    beta, lam, wp, wm = cfg.weights()

    def weigh(t):
        if t >= 1 and on[t]:
            eng.multiply_weights(sw.arr, sw.ext[sw.cur, 0], sw.ext[sw.cur, 1], sw.par, H, t,
                                 cfg.law, key, beta, lam, wp, wm)

    def off_start(t):
        # smallest b with no disorder at times in (b, t)
        b = t - 1
        while b > 0 and not on[b]:
            b -= 1
        return b

    weigh(N)
    t = N
    while t > 0 and not sw.dead:
        b = off_start(t)
        if t - b >= cfg.jump_min:
            sw.jump(t - b, int(plan.R2[b]))
            weigh(b)
            t = b
            continue
        s = t
        while s > 0:
            b = off_start(s)
            if s - b >= cfg.jump_min:
                break
            s = b
        ts = np.arange(t - 1, s - 1, -1)
        dtime = np.where((ts >= 1) & on[ts], ts, -1).astype(np.int64)
        sw.step(dtime, plan.R2[ts].copy(), cfg, key)
        t = s
    out = np.zeros_like(sw.arr) if sw.dead else sw.arr * math.exp(sw.logoff)
    return from_rotated(out, 0, radius)


_FIELD_C: dict = {}


def _field_c(cfg: SimConfig, radius: int) -> float:
    base = replace(cfg, window=None, psi=None, seed=0)
    key = (base.fingerprint(), radius, cfg.law == rng.LAW_NONE)
    if key in _FIELD_C:
        return _FIELD_C[key]
    c = cfg.leak_c
    for _ in range(12):
        plan = _make_plan(base, c, use_events=False, backward_r0=2.0 * radius, on=_noise_on(cfg))
        f = _backward(base, plan, np.uint64(0), radius)
        vals = f.values[f.window.parity_mask()]
        leak = float(np.max(1.0 - vals))
        if leak < cfg.leak_bound:
            break
        c *= 1.25
    else:
        raise LeakError(f"backward truncation leak {leak:.3e} above {cfg.leak_bound:g}")
    _FIELD_C[key] = c
    return c


# ---------------------------------------------------------------------------
# multiscale decomposition
# ---------------------------------------------------------------------------

@dataclass
class MultiscaleRecord:
    """Per-replica output of the multiscale decomposition (index ``i = 0..M``)."""

    replica: int
    logZ: np.ndarray  # log Zdiff_{N,i}, logZ[0] = 0
    m: np.ndarray  # m_{N,i}, m[0] unused (= 1)
    delta: np.ndarray  # Delta_{N,i}, delta[0] unused (= 0)
    domination: np.ndarray  # sup mu_{N,i} / q_{N_i - Ntilde_i}
    ladder: ScaleLadder
    mu: list = field(default_factory=list, repr=False)  # rotated endpoint arrays (optional)
    H: int = 0
    dead: bool = False

    @property
    def Zdiff(self) -> np.ndarray:
        return np.exp(self.logZ)

    def telescope_error(self) -> float:
        """``|log Zdiff_M - sum_i [log(1 + Delta_i) + log m_i]|``."""
        M = self.ladder.M
        s = math.fsum(math.log1p(self.delta[i]) + math.log(self.m[i]) for i in range(1, M + 1))
        return abs(self.logZ[M] - s)

    def to_json(self) -> dict:
        return {"replica": self.replica, "Zdiff": float(math.exp(self.logZ[-1])) if not self.dead else 0.0,
                "logZ": [float(x) for x in self.logZ], "m": [float(x) for x in self.m[1:]],
                "deltas": [float(x) for x in self.delta[1:]],
                "domination": [float(x) for x in self.domination[1:]]}


def multiscale_config(N: int, window: CouplingWindow, ladder: ScaleLadder, phi: LatticeField,
                      seed: int = 0, **kw) -> SimConfig:
    return SimConfig(N=N, window=window, phi=phi, noise_off=ladder.noise_off(),
                     diffusive=ladder.diffusive_events(), seed=seed, **kw)


def _domination(mu: np.ndarray, par: int, H: int, T: int) -> float:
    U, V = rotated_coords(H, par)
    pT = binomial_kernel(T, 2 * H + 2)
    off = 2 * H + 2
    q = pT[np.clip(U + off, 0, 2 * off)] * pT[np.clip(V + off, 0, 2 * off)]
    nz = mu > 0
    if not nz.any():
        return math.nan
    with np.errstate(divide="ignore"):
        return float(np.max(mu[nz] / q[nz]))


def run_multiscale(cfg: SimConfig, ladder: ScaleLadder, replica: int = 0, keep_fields: bool = False) -> MultiscaleRecord:
    """Multiscale decomposition of ``Zdiff`` for one disorder realization."""
    if tuple(cfg.noise_off) != ladder.noise_off():
        raise ValueError("configuration noise-off intervals must match the ladder")
    if dict(cfg.diffusive) != ladder.diffusive_events():
        raise ValueError("configuration diffusive events must match the ladder")
    M = ladder.M
    plan = _calibrated_plan(cfg)
    key = _key(cfg.seed, replica)
    H = plan.H
    sw = _Sweeper(H, to_rotated(cfg.phi, 0, H), 0, 0)
    logZ = np.zeros(M + 1)
    m = np.ones(M + 1)
    delta = np.zeros(M + 1)
    dom = np.full(M + 1, math.nan)
    mus = []
    mu_prev = sw.arr.copy()
    mu_par = 0
    mu_prev /= mu_prev.sum()
    dead = False
    for i in range(1, M + 1):
        Nprev, Nt, Ni = int(ladder.N_i[i - 1]), int(ladder.Nt_i[i]), int(ladder.N_i[i])
        _forward(sw, plan, cfg, key, Ni)
        # conditional mean: noise-free walk from mu_{i-1} through the two diffusive events
        bz = _Sweeper(H, mu_prev, mu_par, Nprev)
        bz.jump(Nt - Nprev, int(plan.events[Nt]))
        bz.jump(Ni - Nt, int(plan.events[Ni]))
        m[i] = bz.total() * math.exp(bz.logoff)
        if sw.dead:
            dead = True
            logZ[i:] = -math.inf
            break
        logZ[i] = sw.log_total()
        ratio = math.exp(logZ[i] - logZ[i - 1])
        delta[i] = ratio / m[i] - 1.0
        mu_prev = sw.arr / sw.total()
        mu_par = sw.par
        dom[i] = _domination(mu_prev, mu_par, H, Ni - Nt)
        if keep_fields:
            mus.append(mu_prev.copy())
    return MultiscaleRecord(replica, logZ, m, delta, dom, ladder, mus, H, dead)


def endpoint_distribution(record: MultiscaleRecord, i: int) -> tuple[LatticeField, float]:
    """Polymer endpoint law ``mu_{N,i}`` and its domination ratio against ``q_{N_i - Ntilde_i}``."""
    if not record.mu:
        raise ValueError("record was produced without keep_fields=True")
    if not 1 <= i <= len(record.mu):
        raise ValueError(f"scale {i} not available")
    arr = record.mu[i - 1]
    tot = arr.sum()
    if tot <= 0:
        raise ValueError("zero endpoint mass")
    f = from_rotated(arr / tot, 0)
    f = LatticeField(f.window, f.values / f.values.sum(), pmf=True)
    return f, float(record.domination[i])


# ---------------------------------------------------------------------------
# replica ensembles
# ---------------------------------------------------------------------------

def run_ensemble(fn, replicas, threads: int = 1):
    """Map ``fn`` over replica indices; results come back in replica order."""
    reps = list(range(replicas)) if isinstance(replicas, int) else list(replicas)
    if threads <= 1 or len(reps) <= 1:
        return [fn(r) for r in reps]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, reps))


def partition_ensemble(cfg: SimConfig, replicas, threads: int = 1) -> np.ndarray:
    """Array of ``Z`` values for the given replicas."""
    _calibrated_plan(cfg)  # calibrate once before fanning out
    res = run_ensemble(lambda r: run_partition(cfg, r).Z, replicas, threads)
    return np.asarray(res, dtype=float)


def multiscale_ensemble(cfg: SimConfig, ladder: ScaleLadder, replicas, threads: int = 1) -> list[MultiscaleRecord]:
    _calibrated_plan(cfg)
    return run_ensemble(lambda r: run_multiscale(cfg, ladder, r), replicas, threads)
