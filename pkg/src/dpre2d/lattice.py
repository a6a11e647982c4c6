"""Dense real-valued fields on truncated windows of the square lattice.

Two coordinate systems are used throughout the package.

* Original coordinates ``(x, y)``: a `LatticeWindow` of sup-norm radius ``r``
  stores a ``(2r+1, 2r+1)`` array indexed by ``[x - ox + r, y - oy + r]``.
* Rotated coordinates ``u = x + y``, ``v = x - y``: one step of the simple
  random walk moves ``u`` and ``v`` by independent ``+-1``.  At a fixed time
  both ``u`` and ``v`` share the parity of the time, so a field is stored
  without holes as a square array indexed by ``i = (u + par) // 2 + H``.
  The Monte Carlo engine works in this layout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PMF_TOL = 1e-12


@dataclass(frozen=True)
class LatticeWindow:
    """Square window ``|z - offset|_inf <= radius``, optionally parity-constrained.

    ``parity`` is ``None`` (no constraint), ``0`` (sites with ``x + y`` even)
    or ``1`` (``x + y`` odd).
    """

    radius: int
    parity: int | None = 0
    origin_offset: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"window radius must be >= 0, got {self.radius}")
        if self.parity not in (None, 0, 1):
            raise ValueError(f"parity must be None, 0 or 1, got {self.parity}")
        object.__setattr__(self, "origin_offset", tuple(int(c) for c in self.origin_offset))

    @property
    def shape(self) -> tuple[int, int]:
        side = 2 * self.radius + 1
        return side, side

    @property
    def even(self) -> bool:
        return self.parity == 0

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Absolute coordinate grids ``(X, Y)`` with ``ij`` indexing."""
        r = self.radius
        ox, oy = self.origin_offset
        xs = np.arange(-r, r + 1) + ox
        ys = np.arange(-r, r + 1) + oy
        return np.meshgrid(xs, ys, indexing="ij")

    def parity_mask(self) -> np.ndarray:
        X, Y = self.coords()
        if self.parity is None:
            return np.ones(self.shape, dtype=bool)
        return ((X + Y) % 2) == self.parity

    def index(self, z) -> tuple[int, int]:
        x, y = int(z[0]), int(z[1])
        ox, oy = self.origin_offset
        return x - ox + self.radius, y - oy + self.radius

    def contains(self, z) -> bool:
        i, j = self.index(z)
        ok = 0 <= i < self.shape[0] and 0 <= j < self.shape[1]
        if ok and self.parity is not None:
            ok = (int(z[0]) + int(z[1])) % 2 == self.parity
        return ok


@dataclass
class LatticeField:
    """Values on the sites of a `LatticeWindow`.

    Sites violating the window parity must hold zero.  With ``pmf=True`` the
    values are additionally checked to form a probability mass function.
    """

    window: LatticeWindow
    values: np.ndarray
    pmf: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.window.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match window {self.window.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("lattice field contains non-finite values")
        if self.window.parity is not None:
            bad = ~self.window.parity_mask() & (self.values != 0.0)
            if bad.any():
                raise ValueError("non-zero value on a site of the wrong parity")
        if self.pmf:
            check_pmf(self.values)

    def at(self, z) -> float:
        if not self.window.contains(z):
            return 0.0
        return float(self.values[self.window.index(z)])

    def total(self) -> float:
        return float(self.values.sum())

    def support(self) -> np.ndarray:
        """``(k, 2)`` array of absolute sites carrying non-zero values."""
        X, Y = self.window.coords()
        nz = self.values != 0.0
        return np.stack([X[nz], Y[nz]], axis=1)

    def support_radius(self) -> int:
        """Sup-norm radius of the support around the window offset."""
        sup = self.support()
        if len(sup) == 0:
            return 0
        off = np.asarray(self.window.origin_offset)
        return int(np.abs(sup - off).max())

    def translate(self, dz) -> "LatticeField":
        dx, dy = int(dz[0]), int(dz[1])
        if self.window.parity is not None and (dx + dy) % 2:
            raise ValueError("translation by an odd vector breaks the parity constraint")
        ox, oy = self.window.origin_offset
        win = LatticeWindow(self.window.radius, self.window.parity, (ox + dx, oy + dy))
        return LatticeField(win, self.values.copy(), self.pmf, dict(self.meta))

    def resized(self, radius: int) -> "LatticeField":
        """Pad or crop to a new radius around the same offset (cropping must not lose mass)."""
        old = self.window.radius
        win = LatticeWindow(radius, self.window.parity, self.window.origin_offset)
        out = np.zeros(win.shape)
        if radius >= old:
            s = radius - old
            out[s:s + 2 * old + 1, s:s + 2 * old + 1] = self.values
        else:
            s = old - radius
            inner = self.values[s:s + 2 * radius + 1, s:s + 2 * radius + 1]
            if not np.isclose(np.abs(inner).sum(), np.abs(self.values).sum(), rtol=0, atol=1e-300):
                raise ValueError("cropping would discard non-zero values")
            out[:] = inner
        return LatticeField(win, out, self.pmf, dict(self.meta))


def check_pmf(values, tol: float = PMF_TOL) -> None:
    v = np.asarray(values, dtype=float)
    if np.any(v < 0):
        raise ValueError("probability mass function has negative entries")
    total = v.sum()
    if abs(total - 1.0) > tol:
        raise ValueError(f"probability mass function sums to {total!r}, not 1")


def point_mass(z=(0, 0)) -> LatticeField:
    """Unit mass at ``z`` (window of radius 0 centred on ``z``)."""
    par = (int(z[0]) + int(z[1])) % 2
    win = LatticeWindow(0, par, (int(z[0]), int(z[1])))
    return LatticeField(win, np.ones((1, 1)), pmf=True)


def uniform_ball(radius: float, center=(0, 0)) -> LatticeField:
    """Uniform law on the even sites of the open Euclidean ball ``|x - center| < radius``."""
    if radius <= 0:
        raise ValueError("ball radius must be positive")
    cx, cy = int(center[0]), int(center[1])
    if (cx + cy) % 2:
        raise ValueError("ball centre must lie on the even sublattice")
    r = int(np.ceil(radius))
    win = LatticeWindow(r, 0, (cx, cy))
    X, Y = win.coords()
    inside = ((X - cx) ** 2 + (Y - cy) ** 2 < radius * radius) & win.parity_mask()
    count = int(inside.sum())
    vals = inside / count
    return LatticeField(win, vals, pmf=True, meta={"ball_radius": float(radius), "sites": count})


# ---------------------------------------------------------------------------
# rotated layout
# ---------------------------------------------------------------------------

def rotated_half_width(field_: LatticeField) -> int:
    """Smallest ``H`` such that the field fits a rotated array of side ``2H + 1``."""
    X, Y = field_.window.coords()
    nz = field_.values != 0.0
    if not nz.any():
        return 0
    U = np.abs(X[nz] + Y[nz])
    V = np.abs(X[nz] - Y[nz])
    return int((max(U.max(), V.max()) + 1) // 2)


def to_rotated(field_: LatticeField, par: int, H: int) -> np.ndarray:
    """Copy a field onto the rotated array of parity ``par`` and half-width ``H``."""
    X, Y = field_.window.coords()
    nz = field_.values != 0.0
    U = X[nz] + Y[nz]
    V = X[nz] - Y[nz]
    if np.any((U - par) % 2):
        raise ValueError(f"field has sites of the wrong parity for rotated layout par={par}")
    iu = (U + par) // 2 + H
    iv = (V + par) // 2 + H
    side = 2 * H + 1
    if len(U) and (iu.min() < 0 or iv.min() < 0 or iu.max() >= side or iv.max() >= side):
        raise ValueError("rotated array too small for the field support")
    out = np.zeros((side, side))
    out[iu, iv] = field_.values[nz]
    return out


def rotated_coords(H: int, par: int) -> tuple[np.ndarray, np.ndarray]:
    """Rotated coordinate grids ``(U, V)`` of a rotated array."""
    k = 2 * (np.arange(2 * H + 1) - H) - par
    return np.meshgrid(k, k, indexing="ij")


def from_rotated(arr: np.ndarray, par: int, radius: int | None = None) -> LatticeField:
    """Convert a rotated array back to a `LatticeField` in original coordinates."""
    H = (arr.shape[0] - 1) // 2
    U, V = rotated_coords(H, par)
    X = (U + V) // 2
    Y = (U - V) // 2
    nz = arr != 0.0
    if radius is None:
        radius = int(max(np.abs(X[nz]).max(initial=0), np.abs(Y[nz]).max(initial=0)))
    win = LatticeWindow(radius, par, (0, 0))
    vals = np.zeros(win.shape)
    keep = (np.abs(X) <= radius) & (np.abs(Y) <= radius)
    vals[X[keep] + radius, Y[keep] + radius] = arr[keep]
    return LatticeField(win, vals)
