"""Exact second moments of polymer partition functions.

Everything here rests on the polynomial chaos expansion: distinct
space-time monomials are orthogonal, so second moments reduce to sums
over increasing time sequences weighted by collision probabilities of two
independent walks.  Writing ``K(d) = q_{2d}(0)`` these sums satisfy linear
Volterra recursions of the form

    X(j) = c(j) + sigma^2 * sum_{j' < j} K(j - j') g(j') X(j'),

which `volterra_solve` evaluates exactly (compensated sums) or, for long
horizons, by a divide-and-conquer FFT convolution.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import fft as sfft

from .lattice import LatticeField, check_pmf
from .walk import A_MINUS, A_PLUS, dampened_overlap, overlap, overlap_table, pair_kernel_series, return_probabilities

DIRECT_MAX = 10_000
_BLOCK = 512


# ---------------------------------------------------------------------------
# Volterra solver
# ---------------------------------------------------------------------------

def _solve_direct(c, K, g, s):
    n = len(c)
    X = np.empty(n)
    Y = np.empty(n)  # Y = g * X
    for j in range(n):
        acc = math.fsum(K[j:0:-1] * Y[:j]) if j else 0.0
        X[j] = c[j] + s * acc
        Y[j] = g[j] * X[j]
    return X


def _solve_fft(c, K, g, s):
    n = len(c)
    X = np.zeros(n)
    Y = np.zeros(n)
    acc = np.zeros(n)

    def block(lo, hi):
        # contributions from [0, lo) are already in acc[lo:hi]
        for j in range(lo, hi):
            if j > lo:
                acc[j] += np.dot(K[j - lo:0:-1], Y[lo:j])
            X[j] = c[j] + s * acc[j]
            Y[j] = g[j] * X[j]

    def rec(lo, hi):
        if hi - lo <= _BLOCK:
            block(lo, hi)
            return
        mid = (lo + hi) // 2
        rec(lo, mid)
        # add sum_{j' in [lo, mid)} K(j - j') Y(j') to acc[j] for j in [mid, hi)
        a = Y[lo:mid]
        k = K[1:hi - lo]
        size = sfft.next_fast_len(len(a) + len(k) - 1, real=True)
        conv = sfft.irfft(sfft.rfft(a, size) * sfft.rfft(k, size), size)
        # conv[t] = sum a[p] k[t - p], index j = lo + p + (t - p) + 1
        acc[mid:hi] += conv[mid - lo - 1:hi - lo - 1]
        rec(mid, hi)

    rec(0, n)
    return X


def volterra_solve(c, g, sigma2: float, method: str = "auto") -> np.ndarray:
    """Solve ``X(j) = c(j) + sigma2 * sum_{j'<j} q_{2(j-j')}(0) g(j') X(j')`` for ``j = 0..L``."""
    c = np.asarray(c, dtype=float)
    g = np.asarray(g, dtype=float)
    L = len(c) - 1
    K = return_probabilities(max(L, 1))
    if method == "auto":
        method = "direct" if L <= DIRECT_MAX else "fft"
    if method == "direct":
        return _solve_direct(c, K, g, sigma2)
    if method == "fft":
        return _solve_fft(c, K, g, sigma2)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# renewal function
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RenewalTable:
    """Weighted renewal function ``U(0..L)`` and its partial sums ``barU``."""

    sigma2: float
    L: int
    U: np.ndarray
    barU: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "U", "barU"])
        for n in range(self.L + 1):
            w.writerow([n, repr(float(self.U[n])), repr(float(self.barU[n]))])
        return buf.getvalue()


def renewal_function(sigma2: float, L: int, method: str = "auto") -> RenewalTable:
    """``U(0) = 1``, ``U(n) = sigma2 * sum_{m<n} q_{2(n-m)}(0) U(m)``."""
    if L < 0:
        raise ValueError("L must be >= 0")
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    c = np.zeros(L + 1)
    c[0] = 1.0
    U = volterra_solve(c, np.ones(L + 1), sigma2, method)
    return RenewalTable(float(sigma2), int(L), U, np.cumsum(U))


def second_moment_p2p(sigma2: float, L: int) -> float:
    """``E[Z_L(0)^2] = barU(L)``."""
    return float(renewal_function(sigma2, L).barU[-1])


def p2p_bracket_ratio(N: int, theta_N: float, L: int) -> float:
    """``barU(L) * (1 - (R_L / R_N)(1 - |theta_N| / log N))`` in the quasi-critical window.

    The renewal representation shows this is at most 1, and at least ``1 - c'/|theta_N|``.
    """
    x = 1.0 - abs(theta_N) / math.log(N)
    R_N = overlap(N)
    sigma2 = x / R_N
    R = overlap_table(L)
    return second_moment_p2p(sigma2, L) * (1.0 - R[L] / R_N * x)


# ---------------------------------------------------------------------------
# variances of averaged partition functions
# ---------------------------------------------------------------------------

def _parse_intervals(noise_off, L: int) -> np.ndarray:
    """Boolean ``on[0..L]`` with ``on[n] = False`` for ``n`` in any half-open ``(a, b]``."""
    on = np.ones(L + 1, dtype=bool)
    on[0] = False
    spans = sorted((int(a), int(b)) for a, b in (noise_off or ()))
    prev = None
    for a, b in spans:
        if not 0 <= a < b <= L:
            raise ValueError(f"noise-off interval ({a}, {b}] must satisfy 0 <= a < b <= L={L}")
        if prev is not None and a < prev:
            raise ValueError("noise-off intervals overlap")
        on[a + 1:b + 1] = False
        prev = b
    return on


def noise_mask(noise_off, L: int) -> np.ndarray:
    return _parse_intervals(noise_off, L)


def variance_averaged(sigma2: float, L: int, phi: LatticeField, table: RenewalTable | None = None) -> float:
    """``Var[Z_L(phi)] = sigma2 * sum_{0<m<=L} q_{2m}(phi, phi) barU(L - m)``."""
    check_pmf(phi.values)
    if L == 0 or sigma2 == 0:
        return 0.0
    if table is None or table.L < L or table.sigma2 != sigma2:
        table = renewal_function(sigma2, L)
    qq = pair_kernel_series(phi, L)
    m = np.arange(1, L + 1)
    return sigma2 * math.fsum(qq[1:] * table.barU[L - m])


def variance_restricted(sigma2: float, L: int, phi: LatticeField, noise_off=()) -> float:
    """Variance of the partition function with disorder removed on ``noise_off``.

    ``noise_off`` is a collection of half-open integer intervals ``(a, b]``
    inside ``(0, L]``.  Only chaos terms whose times all avoid these
    intervals survive.
    """
    check_pmf(phi.values)
    on = _parse_intervals(noise_off, L)
    if L == 0 or sigma2 == 0 or not on.any():
        return 0.0
    # B(n): continuation weight from an active time n up to L; B'(j) = B(L - j)
    g = on[::-1].astype(float)
    Bp = volterra_solve(np.ones(L + 1), g, sigma2)
    B = Bp[::-1]
    qq = pair_kernel_series(phi, L)
    m = np.nonzero(on)[0]
    return sigma2 * math.fsum(qq[m] * B[m])


def variance_bounds(sigma2: float, L: int, phi: LatticeField, table: RenewalTable | None = None):
    """Lower and upper bounds ``R_{L/2}(phi,phi) s barU(L/2)`` and ``R_L(phi,phi) s barU(L)``."""
    if table is None or table.L < L or table.sigma2 != sigma2:
        table = renewal_function(sigma2, L)
    qq = pair_kernel_series(phi, L)
    h = L // 2
    lo = math.fsum(qq[1:h + 1]) * sigma2 * table.barU[h]
    hi = math.fsum(qq[1:L + 1]) * sigma2 * table.barU[L]
    return lo, hi


# ---------------------------------------------------------------------------
# closed-form predictions
# ---------------------------------------------------------------------------

def predicted_variance_limit(ell: float, w: float, regime: str = "quasi-critical", beta_hat: float = 1.0) -> float:
    """Limit of ``Var[Z_L(phi)]`` for ``L = N delta^{2 ell}`` and ``phi`` spread on ``sqrt(N delta^{2w})``."""
    if ell < 0 or ell > w:
        raise ValueError(f"need 0 <= ell <= w, got ell={ell}, w={w}")
    if regime == "sub-critical":
        b2 = beta_hat**2
        return (w - ell) * b2 / (1.0 + ell * b2)
    return (w - ell) / (1.0 + ell)


def multiscale_variance_prediction(M: int, i: int, rho: float, regime: str = "quasi-critical",
                                   beta_hat: float = 1.0) -> float:
    """Limiting conditional variance of the ``i``-th multiscale increment."""
    if not 1 <= i <= M:
        raise ValueError(f"scale index i={i} outside 1..{M}")
    if rho <= 0:
        raise ValueError("rho must be positive")
    r = rho * (beta_hat**2 if regime == "sub-critical" else 1.0)
    return r / (M * (1.0 + (1.0 - i / M) * r))


def multiscale_variance_total(M: int, rho: float, regime: str = "quasi-critical", beta_hat: float = 1.0) -> float:
    return math.fsum(multiscale_variance_prediction(M, i, rho, regime, beta_hat) for i in range(1, M + 1))


# ---------------------------------------------------------------------------
# spread-out condition
# ---------------------------------------------------------------------------

@dataclass
class SpreadReport:
    R_phi: float
    log_sum: float
    target: float
    slack: float
    slack_R: float
    threshold: float
    passed: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def spread_condition_check(phi: LatticeField, L: int, W: float, theta_N: float,
                           threshold: float = 0.2) -> SpreadReport:
    """Compare the pair log-sum of ``phi`` with ``log(L / W)`` in units of ``|theta_N|``."""
    check_pmf(phi.values)
    if W > L:
        raise ValueError(f"W={W} exceeds L={L}")
    if W <= 0:
        raise ValueError("W must be positive")
    sup = phi.support()
    p = phi.values[phi.values != 0.0]
    # pair sum via histogram of squared distances
    d2 = ((sup[:, None, :] - sup[None, :, :]) ** 2).sum(-1) if len(p) <= 4000 else None
    if d2 is not None:
        log_sum = float(np.einsum("i,ij,j->", p, np.log1p(L / (1.0 + d2)), p))
    else:
        log_sum = _log_sum_fft(phi, L)
    R_phi = math.fsum(pair_kernel_series(phi, L)[1:])
    target = math.log(L / W)
    t = abs(theta_N)
    slack = abs(log_sum - target) / t
    slack_R = abs(math.pi * R_phi - target) / t
    return SpreadReport(R_phi, log_sum, target, slack, slack_R, threshold, slack < threshold)


def _log_sum_fft(phi: LatticeField, L: int) -> float:
    from scipy import signal

    v = phi.values
    A = signal.correlate(v, v, mode="full", method="fft")
    r = v.shape[0] - 1
    d = np.arange(-r, r + 1)
    D2 = d[:, None] ** 2 + d[None, :] ** 2
    return float(np.sum(A * np.log1p(L / (1.0 + D2))))


# ---------------------------------------------------------------------------
# renewal Monte Carlo
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MCEstimate:
    value: float
    se: float
    replicas: int
    samples: np.ndarray = field(repr=False, compare=False)


def renewal_mc_estimate(N: int, theta_N: float, L: int, replicas: int, seed: int,
                        estimator: str = "weighted") -> MCEstimate:
    """Monte Carlo estimate of ``barU(L)`` from the collision renewal process.

    Increments ``T`` have law ``q_{2n}(0) / R_N`` on ``1..N`` and
    ``x = 1 - |theta_N| / log N`` so that ``barU(L) = sum_k x^k P(tau_k <= L)``.

    ``estimator="geometric"`` samples ``K ~ Geometric`` with ``P(K = k) = (1-x) x^k``
    and returns ``(log N / |theta_N|) 1{tau_K <= L}``.  The default
    ``"weighted"`` estimator ``sum_k x^k 1{tau_k <= L}`` is its conditional
    expectation given the renewal path, hence unbiased with smaller variance.
    """
    t = abs(theta_N)
    if not 0 < t < math.log(N):
        raise ValueError(f"need 0 < |theta_N| < log N = {math.log(N):.4f}")
    if L < 0 or L > N:
        raise ValueError("need 0 <= L <= N")
    x = 1.0 - t / math.log(N)
    probs = return_probabilities(N)[1:]
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    out = np.empty(replicas)
    if estimator == "weighted":
        tau = np.zeros(replicas, dtype=np.int64)
        alive = np.ones(replicas, dtype=bool)
        out[:] = 1.0
        weight = 1.0
        while alive.any():
            idx = np.nonzero(alive)[0]
            T = np.searchsorted(cdf, rng.random(idx.size), side="right") + 1
            tau[idx] += T
            weight *= x
            ok = tau[idx] <= L
            out[idx[ok]] += weight
            alive[idx[~ok]] = False
    elif estimator == "geometric":
        K = rng.geometric(1.0 - x, size=replicas) - 1
        for r in range(replicas):
            k = K[r]
            if k == 0:
                out[r] = 1.0
                continue
            T = np.searchsorted(cdf, rng.random(k), side="right") + 1
            out[r] = 1.0 if T.sum() <= L else 0.0
        out *= math.log(N) / t
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    se = float(out.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else float("nan")
    return MCEstimate(float(out.mean()), se, replicas, out)


# ---------------------------------------------------------------------------
# appendix inequalities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LowerBoundResult:
    applicable: bool
    holds: bool | None
    lhs: float | None
    rhs: float | None
    R_damped: float


def lower_bound_check(sigma2: float, L: int, lam_hat: float) -> LowerBoundResult:
    """If ``sigma2 <= 1/(R_L^(lam) + 4 a_+)`` check ``barU(L//2) >= 1 / (2 (1 - sigma2 R_L^(lam)))``."""
    Rl = dampened_overlap(L, lam_hat)
    if sigma2 > 1.0 / (Rl + 4.0 * A_PLUS):
        return LowerBoundResult(False, None, None, None, Rl)
    lhs = second_moment_p2p(sigma2, L // 2)
    rhs = 0.5 / (1.0 - sigma2 * Rl)
    return LowerBoundResult(True, bool(lhs >= rhs), lhs, rhs, Rl)


def choice_inequality_gap(L: int, lam_hat: float) -> float:
    """``R_L - log(lam/2)/4 - R_L^(lam)``; non-negative whenever ``0 <= lam <= L``."""
    if not 0 <= lam_hat <= L:
        raise ValueError("need 0 <= lam_hat <= L")
    if lam_hat == 0:
        return math.inf
    return overlap(L) - A_MINUS * math.log(lam_hat / 2.0) - dampened_overlap(L, lam_hat)
