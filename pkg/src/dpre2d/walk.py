"""Exact kernels of the simple symmetric random walk on Z^2.

In rotated coordinates ``u = x + y``, ``v = x - y`` the walk is a pair of
independent +-1 walks, hence ``q_n(x, y) = p_n(x + y) p_n(x - y)`` where
``p_n(k) = C(n, (n + k) / 2) / 2^n`` is the one-dimensional kernel.  All
quantities here are built from that factorization; nothing is obtained by
repeated convolution.
"""
from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal, special, stats

from .lattice import LatticeField, LatticeWindow, check_pmf

#: sharp constants in ``a_- / n <= q_{2n}(0) <= a_+ / n`` (attained at n = 1 and n -> oo)
A_MINUS = 0.25
A_PLUS = 1.0 / math.pi

EXACT_MAX_N = 1024
SUPPORTED_MAX_N = 2**31 - 1


class CapabilityError(RuntimeError):
    """Requested kernel lies outside the range this implementation supports."""


class _ByteLRU:
    """Thread-safe LRU keyed cache bounded by the total ``nbytes`` of its values."""

    def __init__(self, max_bytes: int):
        self.max_bytes = int(max_bytes)
        self._data: OrderedDict = OrderedDict()
        self._bytes = 0
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            if key not in self._data:
                return None
            self._data.move_to_end(key)
            return self._data[key]

    def put(self, key, value, nbytes: int):
        if nbytes > self.max_bytes:
            return
        with self._lock:
            if key in self._data:
                return
            self._data[key] = (value, nbytes)
            self._bytes += nbytes
            while self._bytes > self.max_bytes:
                _, (_, old) = self._data.popitem(last=False)
                self._bytes -= old

    def clear(self):
        with self._lock:
            self._data.clear()
            self._bytes = 0

    def __len__(self):
        return len(self._data)


_KERNEL_CACHE = _ByteLRU(2 * 1024**3)


def set_kernel_cache_limit(max_bytes: int) -> None:
    """Bound the memoized kernel tables (default 2 GB)."""
    global _KERNEL_CACHE
    _KERNEL_CACHE = _ByteLRU(max_bytes)


# ---------------------------------------------------------------------------
# one-dimensional kernel
# ---------------------------------------------------------------------------

def _check_n(n: int) -> int:
    n = int(n)
    if n < 0:
        raise ValueError(f"time must be >= 0, got {n}")
    if n > SUPPORTED_MAX_N:
        raise CapabilityError(f"n={n} exceeds the supported range (<= {SUPPORTED_MAX_N})")
    return n


def binomial_kernel(n: int, kmax: int | None = None) -> np.ndarray:
    """One-dimensional kernel ``p_n(k)`` for ``k = -kmax..kmax``.

    Exact big-integer arithmetic (correctly rounded) up to ``n = 1024``;
    beyond that scipy's binomial pmf, accurate to a few ulps and evaluated
    symmetrically so that the kernel keeps its reflection symmetry exactly.
    """
    n = _check_n(n)
    if kmax is None:
        kmax = n
    ks = np.arange(-kmax, kmax + 1)
    out = np.zeros(ks.size)
    ok = (np.abs(ks) <= n) & ((ks + n) % 2 == 0)
    js = (ks[ok] + n) // 2
    if n <= EXACT_MAX_N:
        denom = 1 << n
        out[ok] = [float(Fraction(math.comb(n, int(j)), denom)) for j in js]
    else:
        # evaluate on |k| only so that p_n(k) = p_n(-k) holds bit for bit
        out[ok] = stats.binom.pmf(np.minimum(js, n - js), n, 0.5)
    return out


def return_probabilities(n_max: int) -> np.ndarray:
    """``q_{2n}(0)`` for ``n = 0..n_max``."""
    n_max = _check_n(n_max)
    n = np.arange(n_max + 1)
    p = stats.binom.pmf(n, 2 * n, 0.5)
    small = n[: min(n_max, EXACT_MAX_N // 2) + 1]
    p[small] = [float(Fraction(math.comb(2 * int(m), int(m)), 1 << (2 * int(m)))) for m in small]
    return p * p


def _central_rows(ms: np.ndarray, jmax: int) -> np.ndarray:
    """Matrix ``P[r, j] = p_{2 m_r}(2 j)`` for ``j = 0..jmax``.

    Built from ``p_{2m}(0)`` by the exact ratio ``C(2m, m+j) / C(2m, m+j-1) = (m-j+1)/(m+j)``.
    """
    ms = np.asarray(ms, dtype=float)
    P = np.empty((ms.size, jmax + 1))
    P[:, 0] = np.sqrt(return_probabilities(int(ms.max()) if ms.size else 0))[ms.astype(int)]
    for j in range(1, jmax + 1):
        P[:, j] = P[:, j - 1] * np.maximum(ms - j + 1, 0.0) / (ms + j)
    return P


# ---------------------------------------------------------------------------
# two-dimensional kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelTable:
    """``q_n(z)`` for all ``z`` in a window (parity ``n mod 2``)."""

    n: int
    field: LatticeField

    def at(self, z) -> float:
        return self.field.at(z)


def srw_kernel(n: int, radius: int | None = None) -> KernelTable:
    """Transition kernel ``q_n(z) = P(S_n = z | S_0 = 0)`` on ``|z|_inf <= radius``."""
    n = _check_n(n)
    if radius is None:
        radius = n
    radius = int(radius)
    key = (n, radius)
    hit = _KERNEL_CACHE.get(key)
    if hit is not None:
        return hit[0]
    K = 2 * radius
    p = binomial_kernel(n, K)
    r = np.arange(-radius, radius + 1)
    X, Y = np.meshgrid(r, r, indexing="ij")
    vals = p[X + Y + K] * p[X - Y + K]
    if radius < n:
        lost = 1.0 - math.fsum(vals.ravel())
        if lost > 1e-15:
            raise ValueError(f"radius {radius} truncates mass {lost:.3e} of q_{n}")
    win = LatticeWindow(radius, n % 2)
    table = KernelTable(n, LatticeField(win, vals))
    _KERNEL_CACHE.put(key, table, vals.nbytes)
    return table


def overlap(N: int) -> float:
    """Expected replica overlap ``R_N = sum_{n<=N} q_{2n}(0)``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return math.fsum(return_probabilities(N)[1:])


def overlap_table(N: int) -> np.ndarray:
    """Cumulative overlaps ``R_n`` for ``n = 0..N``."""
    r = return_probabilities(N)
    r[0] = 0.0
    return np.cumsum(r)


def green_offset(L: int, z) -> float:
    """Finite-horizon Green's function ``R_L(z) = sum_{n<=L} q_{2n}(z)``."""
    if L < 1:
        raise ValueError("L must be >= 1")
    x, y = int(z[0]), int(z[1])
    if (x + y) % 2:
        return 0.0
    u, v = abs(x + y) // 2, abs(x - y) // 2
    ms = np.arange(1, L + 1)
    P = _central_rows(ms, max(u, v))
    return math.fsum(P[:, u] * P[:, v])


def autocorrelation_rotated(phi: LatticeField) -> tuple[np.ndarray, int]:
    """Autocorrelation ``A(d) = sum_x phi(x) phi(x + d)`` in rotated half-coordinates.

    Returns ``(A, J)`` where ``A[a, b]`` holds the value at ``u = 2(a - J)``,
    ``v = 2(b - J)``.
    """
    vals = phi.values
    nz = np.nonzero(vals)
    if len(nz[0]) == 0:
        raise ValueError("empty field")
    i0, i1 = nz[0].min(), nz[0].max() + 1
    j0, j1 = nz[1].min(), nz[1].max() + 1
    core = vals[i0:i1, j0:j1]
    A = signal.correlate(core, core, mode="full", method="auto")
    hx, hy = core.shape[0] - 1, core.shape[1] - 1
    dx = np.arange(-hx, hx + 1)
    dy = np.arange(-hy, hy + 1)
    DX, DY = np.meshgrid(dx, dy, indexing="ij")
    odd = (DX + DY) % 2 == 1
    if np.abs(A[odd]).max(initial=0.0) > 1e-14 * np.abs(A).max():
        raise ValueError("field mixes both sublattices")
    U = DX + DY
    V = DX - DY
    J = (hx + hy + 1) // 2 + 1
    out = np.zeros((2 * J + 1, 2 * J + 1))
    keep = ~odd & (A != 0.0)
    np.add.at(out, (U[keep] // 2 + J, V[keep] // 2 + J), A[keep])
    return out, J


def pair_kernel_series(phi: LatticeField, L: int, chunk: int = 4096) -> np.ndarray:
    """``q_{2m}(phi, phi) = sum_{x,x'} phi(x) phi(x') q_{2m}(x - x')`` for ``m = 0..L``."""
    A, J = autocorrelation_rotated(phi)
    out = np.empty(L + 1)
    out[0] = float(np.sum(phi.values**2))
    # fold A onto |u|, |v| since p_{2m} is even
    idx = np.abs(np.arange(-J, J + 1))
    for lo in range(1, L + 1, chunk):
        hi = min(L + 1, lo + chunk)
        ms = np.arange(lo, hi)
        P = _central_rows(ms, J)[:, idx]
        out[lo:hi] = np.einsum("ma,ma->m", P @ A, P)
    return out


def quadratic_form(L: int, phi: LatticeField) -> float:
    """``R_L(phi, phi) = sum_{z,w} phi(z) R_L(z - w) phi(w)`` for a pmf ``phi``."""
    check_pmf(phi.values)
    if L < 1:
        raise ValueError("L must be >= 1")
    return math.fsum(pair_kernel_series(phi, L)[1:])


def continuum_green(x) -> float:
    """Continuum Green's function ``G(x) = E_1(|x|^2 / 2) / (2 pi)``."""
    r2 = float(np.sum(np.asarray(x, dtype=float) ** 2))
    if r2 == 0.0:
        raise ValueError("continuum Green's function diverges at x = 0")
    return float(special.exp1(r2 / 2.0) / (2.0 * math.pi))


def dampened_overlap(L: int, lam_hat: float) -> float:
    """``R_L^(lam) = sum_{n<=L} exp(-lam n / L) q_{2n}(0)``."""
    if L < 1:
        raise ValueError("L must be >= 1")
    if lam_hat < 0:
        raise ValueError("damping must be >= 0")
    n = np.arange(1, L + 1)
    return math.fsum(np.exp(-lam_hat * n / L) * return_probabilities(L)[1:])


def heat_kernel(t: float, X, Y) -> np.ndarray:
    """Gaussian density ``g_t(x) = exp(-|x|^2 / 2t) / (2 pi t)``."""
    return np.exp(-(X**2 + Y**2) / (2.0 * t)) / (2.0 * math.pi * t)


def local_clt_check(n: int) -> float:
    """``sup_z |q_n(z) - 2 g_{n/2}(z) 1_even(z)|`` for even ``n``."""
    n = int(n)
    if n < 2 or n % 2:
        raise ValueError("local CLT check needs an even time n >= 2")
    radius = min(n, int(math.ceil(12 * math.sqrt(n))) + 2)
    K = 2 * radius
    p = binomial_kernel(n, K)
    r = np.arange(-radius, radius + 1)
    X, Y = np.meshgrid(r, r, indexing="ij")
    q = p[X + Y + K] * p[X - Y + K]
    even = (X + Y) % 2 == 0
    g = 2.0 * heat_kernel(n / 2.0, X, Y) * even
    return float(np.abs(q - g).max())


def local_clt_slope(ns) -> float:
    """Least-squares slope of ``log sup-deviation`` against ``log n``."""
    ns = np.asarray(ns, dtype=float)
    dev = np.array([local_clt_check(int(n)) for n in ns])
    return float(np.polyfit(np.log(ns), np.log(dev), 1)[0])
