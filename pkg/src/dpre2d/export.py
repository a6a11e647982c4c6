"""Plain-file exports: CSV tables and PGM images of lattice fields."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .lattice import LatticeField

MAXVAL16 = 65535


def field_rows(f: LatticeField, skip_zero_parity: bool = True):
    """Rows ``(z1, z2, value)`` in lexicographic order."""
    X, Y = f.window.coords()
    keep = f.window.parity_mask() if skip_zero_parity else np.ones(f.values.shape, bool)
    for x, y, v in zip(X[keep], Y[keep], f.values[keep]):
        yield int(x), int(y), float(v)


def write_field_csv(f: LatticeField, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z1", "z2", "value"])
        for x, y, v in field_rows(f):
            w.writerow([x, y, repr(v)])
    return path


def write_table_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def _odd_parity_filled(f: LatticeField) -> np.ndarray:
    """Image array where odd-parity cells copy their left neighbour (for display only)."""
    img = f.values.copy()
    if f.window.parity is not None:
        bad = ~f.window.parity_mask()
        shifted = np.roll(img, 1, axis=1)
        shifted[:, 0] = np.roll(img, -1, axis=1)[:, 0]
        img[bad] = shifted[bad]
    return img


def write_pgm_p2(f: LatticeField, path, maxval: int = MAXVAL16) -> Path:
    """ASCII PGM, linear in the value, scaled so that the maximum maps to ``maxval``."""
    img = _odd_parity_filled(f)
    top = img.max()
    g = np.zeros(img.shape, dtype=np.int64) if top <= 0 else np.floor(maxval * img / top).astype(np.int64)
    g = np.clip(g, 0, maxval)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(f"P2\n{g.shape[1]} {g.shape[0]}\n{maxval}\n")
        for row in g:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")
    return path


def log_quantiles(values: np.ndarray, lo: float = 0.01, hi: float = 0.99) -> tuple[float, float]:
    v = values[values > 0]
    if len(v) == 0:
        raise ValueError("field has no positive values")
    q = np.quantile(np.log(v), [lo, hi])
    return float(q[0]), float(q[1])


def write_pgm_p5(f: LatticeField, path, quantiles: tuple[float, float] | None = None) -> tuple[Path, tuple]:
    """Binary 16-bit big-endian PGM with log mapping.

    Gray level ``clamp(floor(65535 (log Z - q_lo) / (q_hi - q_lo)))`` where
    ``(q_lo, q_hi)`` are the 1% and 99% quantiles of ``log Z`` over the
    positive sites unless given.  Returns the path and the quantiles used.
    """
    img = _odd_parity_filled(f)
    q = log_quantiles(f.values[f.window.parity_mask()]) if quantiles is None else tuple(quantiles)
    span = q[1] - q[0]
    with np.errstate(divide="ignore"):
        L = np.where(img > 0, np.log(np.where(img > 0, img, 1.0)), -math.inf)
    if span <= 0:
        g = np.where(img > 0, MAXVAL16 // 2, 0)
    else:
        g = np.floor(MAXVAL16 * (L - q[0]) / span)
    g = np.clip(np.nan_to_num(g, neginf=0.0), 0, MAXVAL16).astype(">u2")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{g.shape[1]} {g.shape[0]}\n{MAXVAL16}\n".encode("ascii"))
        fh.write(g.tobytes())
    return path, q


def read_pgm(path) -> np.ndarray:
    """Read a P2 or P5 PGM written by this module."""
    data = Path(path).read_bytes()
    magic = data[:2]
    tokens, pos = [], 2
    while len(tokens) < 3:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    w, h, maxval = tokens
    if magic == b"P2":
        vals = np.array(data[pos:].split(), dtype=np.int64)
        return vals.reshape(h, w)
    if magic == b"P5":
        dt = ">u2" if maxval > 255 else "u1"
        return np.frombuffer(data[pos + 1:], dtype=dt).reshape(h, w).astype(np.int64)
    raise ValueError(f"not a PGM file: {path}")
