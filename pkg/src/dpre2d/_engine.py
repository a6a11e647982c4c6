"""Compiled transfer-matrix kernels on the rotated lattice layout.

A state at time ``n`` lives on a square array ``a`` of side ``S = 2H + 1``
where cell ``(i, j)`` holds the site ``u = 2(i - H) - p``, ``v = 2(j - H) - p``
and ``p = n mod 2``.  One walk step to parity ``p'`` reads the four cells
``(i, j), (i, j + s), (i + s, j), (i + s, j + s)`` with ``s = -1`` if
``p' = 1`` and ``s = +1`` otherwise.

Each step keeps only the disk ``u^2 + v^2 <= R2`` (integer test) and tracks
the column extent of every row so that stale cells are cleared even when
the disk shrinks.  Values are kept in linear scale with a scalar
log-offset.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from .rng import LAW_NONE, LAW_RADEMACHER, OFF, _gauss_pair, mix, row_key, time_key

PAD = 64
HUGE = 1e150
TINY = 1e-150
CHECK_EVERY = 8


@nb.njit(inline="always", cache=True)
def isqrt(x):
    if x < 0:
        return -1
    r = int(math.sqrt(float(x)))
    while r * r > x:
        r -= 1
    while (r + 1) * (r + 1) <= x:
        r += 1
    return r


@nb.njit(inline="always", cache=True)
def parity_floor(m, p):
    """Largest ``k <= m`` with ``k = p (mod 2)``."""
    if ((m - p) % 2 + 2) % 2 == 0:
        return m
    return m - 1


@nb.njit(inline="always", cache=True)
def row_range(R2, p, H):
    """Index range ``[ilo, ihi]`` of rows meeting the disk (empty if ilo > ihi)."""
    um = isqrt(R2)
    if um < 0:
        return 1, 0
    top = parity_floor(um, p)
    if top < -um:
        return 1, 0
    return (-top + p) // 2 + H, (top + p) // 2 + H


@nb.njit(inline="always", cache=True)
def col_range(R2, u, p, H):
    rem = R2 - u * u
    if rem < 0:
        return 1, 0
    vm = isqrt(rem)
    top = parity_floor(vm, p)
    if top < -vm:
        return 1, 0
    return (-top + p) // 2 + H, (top + p) // 2 + H


@nb.njit(cache=True)
def make_table(wplus, wminus):
    table = np.empty((256, 8))
    for bb in range(256):
        for k in range(8):
            table[bb, k] = wplus if (bb >> k) & 1 else wminus
    return table


@nb.njit(inline="always", cache=True)
def fill_weights(wbuf, law, key, t, u, p, H, jlo, jhi, table, beta, lam):
    """Write the disorder weights of row ``u`` at time ``t`` into ``wbuf[PAD + j]``."""
    hu = row_key(time_key(key, t), u)
    c = OFF // 2 - H - p  # vh(j) = j + c
    if law == LAW_RADEMACHER:
        vh0 = jlo + c
        blk = vh0 >> 6
        j = jlo - (vh0 & 63)
        while j <= jhi:
            bits = mix(hu ^ np.uint64(blk))
            for by in range(8):
                byte = (bits >> np.uint64(8 * by)) & np.uint64(255)
                base8 = PAD + j + 8 * by
                for k in range(8):
                    wbuf[base8 + k] = table[byte, k]
            j += 64
            blk += 1
    else:
        vh0 = jlo + c
        j = jlo - (vh0 & 1)
        pr = (vh0 >> 1)
        while j <= jhi:
            g0, g1 = _gauss_pair(hu, np.uint64(pr))
            wbuf[PAD + j] = math.exp(beta * g0 - lam)
            wbuf[PAD + j + 1] = math.exp(beta * g1 - lam)
            j += 2
            pr += 1


@nb.njit(fastmath=True, boundscheck=False, cache=True)
def _stencil(x, y, o, ww, lo, jlo, jhi, weighted):
    """``o[j] = (x[j+lo] + x[j+lo+1] + y[j+lo] + y[j+lo+1]) / 4 * ww[j]`` on ``jlo..jhi``."""
    xs = x[jlo + lo:jhi + lo + 2]
    ys = y[jlo + lo:jhi + lo + 2]
    os_ = o[jlo:jhi + 1]
    n = jhi - jlo + 1
    if weighted:
        for j in range(n):
            os_[j] = 0.25 * (xs[j] + xs[j + 1] + ys[j] + ys[j + 1]) * ww[j]
    else:
        for j in range(n):
            os_[j] = 0.25 * (xs[j] + xs[j + 1] + ys[j] + ys[j + 1])


@nb.njit(fastmath=True, boundscheck=False, cache=True)
def _rowmax(o, jlo, jhi):
    m = 0.0
    for j in range(jlo, jhi + 1):
        m = max(m, o[j])
    return m


@nb.njit(nogil=True, boundscheck=False, cache=True)
def advance(buf, ext, cur, par, H, dtime, R2s, law, key, beta, lam, wplus, wminus, logoff):
    """Apply ``len(dtime)`` walk steps to ``buf[cur]`` (parity ``par``).

    ``dtime[k]`` is the disorder time applied to the new row (``-1`` for none)
    and ``R2s[k]`` the squared rotated radius kept after step ``k``.
    Returns ``(cur, par, logoff, status)`` with ``status = 1`` if the state
    became identically zero.
    """
    S = buf.shape[1]
    wbuf = np.ones(S + 2 * PAD)
    table = make_table(wplus, wminus)
    for k in range(dtime.shape[0]):
        a = buf[cur]
        b = buf[1 - cur]
        alo = ext[cur, 0]
        ahi = ext[cur, 1]
        blo = ext[1 - cur, 0]
        bhi = ext[1 - cur, 1]
        p = 1 - par
        sh = -1 if p == 1 else 1
        R2 = R2s[k]
        t = dtime[k]
        use_w = t >= 0 and law != LAW_NONE
        ilo, ihi = row_range(R2, p, H)
        ilo = max(ilo, 1)
        ihi = min(ihi, S - 2)
        mx = 0.0
        nonempty = False
        check = k % CHECK_EVERY == CHECK_EVERY - 1 or k == dtime.shape[0] - 1
        for i in range(S):
            if i < ilo or i > ihi:
                if blo[i] <= bhi[i]:
                    b[i, blo[i]:bhi[i] + 1] = 0.0
                    blo[i] = 1
                    bhi[i] = 0
                continue
            # source rows i and i + sh must have content for a non-zero result
            r0 = i
            r1 = i + sh
            if alo[r0] > ahi[r0] and alo[r1] > ahi[r1]:
                if blo[i] <= bhi[i]:
                    b[i, blo[i]:bhi[i] + 1] = 0.0
                    blo[i] = 1
                    bhi[i] = 0
                continue
            u = 2 * (i - H) - p
            jlo, jhi = col_range(R2, u, p, H)
            # restrict to columns reachable from the source extents
            if alo[r0] > ahi[r0]:
                slo = alo[r1]
                shi = ahi[r1]
            elif alo[r1] > ahi[r1]:
                slo = alo[r0]
                shi = ahi[r0]
            else:
                slo = min(alo[r0], alo[r1])
                shi = max(ahi[r0], ahi[r1])
            if sh == 1:
                jlo = max(jlo, slo - 1)
                jhi = min(jhi, shi)
            else:
                jlo = max(jlo, slo)
                jhi = min(jhi, shi + 1)
            jlo = max(jlo, 1)
            jhi = min(jhi, S - 2)
            if jlo > jhi:
                if blo[i] <= bhi[i]:
                    b[i, blo[i]:bhi[i] + 1] = 0.0
                    blo[i] = 1
                    bhi[i] = 0
                continue
            # clear stale cells of b outside the new extent
            if blo[i] <= bhi[i]:
                if blo[i] < jlo:
                    b[i, blo[i]:min(bhi[i], jlo - 1) + 1] = 0.0
                if bhi[i] > jhi:
                    b[i, max(blo[i], jhi + 1):bhi[i] + 1] = 0.0
            blo[i] = jlo
            bhi[i] = jhi
            if use_w:
                fill_weights(wbuf, law, key, t, u, p, H, jlo, jhi, table, beta, lam)
            ww = wbuf[PAD + jlo:PAD + jhi + 1]
            _stencil(a[r0], a[r1], b[i], ww, 0 if sh == 1 else -1, jlo, jhi, use_w)
            if check:
                mx = max(mx, _rowmax(b[i], jlo, jhi))
            else:
                nonempty = True
        cur = 1 - cur
        par = p
        if not check:
            if not nonempty:
                return cur, par, logoff, 1
            continue
        if mx == 0.0:
            return cur, par, logoff, 1
        if mx > HUGE or mx < TINY:
            inv = 1.0 / mx
            bb = buf[cur]
            for i in range(S):
                if blo[i] <= bhi[i]:
                    for j in range(blo[i], bhi[i] + 1):
                        bb[i, j] *= inv
            logoff += math.log(mx)
    return cur, par, logoff, 0


@nb.njit(nogil=True, cache=True)
def multiply_weights(a, lo, hi, par, H, t, law, key, beta, lam, wplus, wminus):
    """Multiply the state (parity ``par``) by the disorder weights of time ``t`` in place."""
    S = a.shape[0]
    wbuf = np.ones(S + 2 * PAD)
    table = make_table(wplus, wminus)
    for i in range(S):
        if lo[i] > hi[i]:
            continue
        u = 2 * (i - H) - par
        fill_weights(wbuf, law, key, t, u, par, H, lo[i], hi[i], table, beta, lam)
        for j in range(lo[i], hi[i] + 1):
            a[i, j] *= wbuf[PAD + j]


@nb.njit(nogil=True, cache=True)
def clip_disk(a, lo, hi, par, H, R2):
    """Zero every cell outside ``u^2 + v^2 <= R2`` and recompute the row extents."""
    S = a.shape[0]
    for i in range(S):
        u = 2 * (i - H) - par
        jlo, jhi = col_range(R2, u, par, H)
        jlo = max(jlo, 0)
        jhi = min(jhi, S - 1)
        if jlo > jhi:
            a[i, :] = 0.0
            lo[i] = 1
            hi[i] = 0
            continue
        a[i, :jlo] = 0.0
        a[i, jhi + 1:] = 0.0
        # shrink to the non-zero span
        while jlo <= jhi and a[i, jlo] == 0.0:
            jlo += 1
        while jhi >= jlo and a[i, jhi] == 0.0:
            jhi -= 1
        if jlo > jhi:
            lo[i] = 1
            hi[i] = 0
        else:
            lo[i] = jlo
            hi[i] = jhi


@nb.njit(nogil=True, cache=True)
def masked_sum(a, lo, hi):
    s = 0.0
    for i in range(a.shape[0]):
        for j in range(lo[i], hi[i] + 1):
            s += a[i, j]
    return s
