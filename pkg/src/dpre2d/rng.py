"""Counter-based disorder generator.

Every disorder variable ``omega(t, x)`` is a pure function of
``(seed, replica, t, u, v)`` with ``u = x1 + x2`` and ``v = x1 - x2``,
obtained by chaining the SplitMix64 finalizer.  Nothing is stored, and the
value at a site never depends on the order in which sites are visited.

Rademacher variables use one bit each: a single hash serves 64 consecutive
sites of a rotated row.  Gaussian variables use the Box-Muller transform
of two 53-bit uniforms, giving two sites per pair of hashes.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
OFF = 1 << 40  # keeps hashed coordinates non-negative
TWO_PI = 2.0 * math.pi
INV53 = 1.0 / 9007199254740992.0

LAW_NONE = 0
LAW_RADEMACHER = 1
LAW_GAUSSIAN = 2


@nb.njit(inline="always", cache=True)
def mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True)
def replica_key(seed, replica):
    return mix(np.uint64(seed) ^ mix(np.uint64(replica) + GOLDEN))


@nb.njit(inline="always", cache=True)
def time_key(key, t):
    return mix(key ^ mix(np.uint64(t) * GOLDEN + np.uint64(1)))


@nb.njit(inline="always", cache=True)
def row_key(tk, u):
    return mix(tk ^ np.uint64(u + OFF))


@nb.njit(cache=True)
def rademacher(key, t, u, v):
    """``omega(t, (u, v))`` in ``{-1, +1}``."""
    hu = row_key(time_key(key, t), u)
    vh = np.uint64((v + OFF) >> 1)
    word = mix(hu ^ (vh >> np.uint64(6)))
    return 1.0 if (word >> (vh & np.uint64(63))) & np.uint64(1) else -1.0


@nb.njit(inline="always", cache=True)
def _gauss_pair(hu, pr):
    w1 = mix(hu ^ (np.uint64(2) * pr))
    w2 = mix(hu ^ (np.uint64(2) * pr + np.uint64(1)))
    u1 = (float(w1 >> np.uint64(11)) + 1.0) * INV53
    u2 = float(w2 >> np.uint64(11)) * INV53
    r = math.sqrt(-2.0 * math.log(u1))
    return r * math.cos(TWO_PI * u2), r * math.sin(TWO_PI * u2)


@nb.njit(cache=True)
def gaussian(key, t, u, v):
    """``omega(t, (u, v))`` standard normal."""
    hu = row_key(time_key(key, t), u)
    vh = np.uint64((v + OFF) >> 1)
    g0, g1 = _gauss_pair(hu, vh >> np.uint64(1))
    return g1 if vh & np.uint64(1) else g0


@nb.njit(cache=True)
def omega(law, key, t, u, v):
    if law == LAW_RADEMACHER:
        return rademacher(key, t, u, v)
    if law == LAW_GAUSSIAN:
        return gaussian(key, t, u, v)
    return 0.0


def stream_key(seed: int, replica: int) -> np.uint64:
    """Key of the disorder stream ``(seed, replica)``, always typed as ``uint64``."""
    return np.uint64(replica_key(np.uint64(seed), np.uint64(replica)))


def omega_xy(law: int, seed: int, replica: int, t: int, x: int, y: int) -> float:
    """Disorder at time ``t`` and original-coordinate site ``(x, y)``."""
    return float(omega(law, stream_key(seed, replica), t, x + y, x - y))


def disorder_row(law: int, seed: int, replica: int, t: int, radius: int) -> np.ndarray:
    """``omega(t, x)`` on the sup-norm window of ``radius``; zero off the parity of ``t``."""
    key = stream_key(seed, replica)
    side = 2 * radius + 1
    out = np.zeros((side, side))
    for i in range(side):
        for j in range(side):
            x, y = i - radius, j - radius
            if (x + y - t) % 2 == 0:
                out[i, j] = omega(law, key, t, x + y, x - y)
    return out
