"""Jitted single-replica engines and replica-batch loops.

Layout conventions shared by every kernel here:

* ``pos``: int64[d] current position, d <= 8.
* ``tab``: int64[cap, W+1] open-addressing visit table, cap a power of two.
  Each coordinate pair packs into one 64-bit word (W = ceil(d/2) words);
  column W holds the walk-arrival count, 0 marking an empty slot.
* ``scal``: int64[8] counters: 0 time, 1 slots used, 2 range size,
  3 fresh-departure steps, 4 status (0 ok, 1 coordinate overflow),
  5 total visit count of the current site (walk arrivals + environment).
* ``bbox``: int64[2, d] per-axis min/max over walk-visited sites.
* ``E``: environment tuple (kind, fixed values int64[d], fixed mask int64[d],
  pre-count, packed finite table) with kind 0 empty, 1 finite, 2 line,
  3 trumpet.

Performance note: numba does not inline helper calls whose bodies contain
loops, and every surviving call costs tens of ns in reference counting.
The replica-hot loops (``k_mc_stage``, ``k_run_block``, ``k_mc_recon``)
therefore carry the step body verbatim; the moderate-rate kernels compose
the ``_advance_*`` helpers instead.  Both paths consume the random stream
identically, so they produce the same trajectories.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .streams import U64, fold, mix64, next_below, next_u64, stream_from, stream_init

_HSEED = U64(0x243F6A8885A308D3)
_LOW32 = U64(0xFFFFFFFF)
COORD_LIMIT = 2**31 - 1

ENV_EMPTY = 0
ENV_FINITE = 1
ENV_LINE = 2
ENV_TRUMPET = 3

STRAT_FIXED = 1
STRAT_ROUND_ROBIN = 2
STRAT_UNIFORM = 3

MODE_FINAL = 0
MODE_WINDOW = 1
MODE_RANGE = 2
MODE_WIDTHS = 3
MODE_RETURNS = 4

# e^x for x in 1..21 (e^22 exceeds any 32-bit coordinate).  A lookup table
# keeps the membership test free of raising libm calls.
_EXP_SMALL = np.array([0.0] + [math.exp(x) for x in range(1, 22)], dtype=np.float64)


@njit(cache=True, nogil=True, inline="always")
def _pack(pos, d, wbuf):
    W = (d + 1) // 2
    i = 0
    for j in range(W):
        a = U64(pos[i]) & _LOW32
        i += 1
        if i < d:
            b = U64(pos[i]) & _LOW32
        else:
            b = U64(0)
        i += 1
        wbuf[j] = np.int64((a << U64(32)) | b)
    return W


@njit(cache=True, nogil=True, inline="always")
def _hash_words(wbuf, W):
    h = _HSEED
    for j in range(W):
        h = mix64(h ^ U64(wbuf[j]))
    return h


@njit(cache=True, nogil=True)
def _tab_lookup(tab, wbuf, W):
    mask = tab.shape[0] - 1
    slot = np.int64(_hash_words(wbuf, W) & U64(mask))
    while True:
        c = tab[slot, W]
        if c == 0:
            return np.int64(0)
        ok = True
        for j in range(W):
            if tab[slot, j] != wbuf[j]:
                ok = False
                break
        if ok:
            return c
        slot = (slot + 1) & mask


@njit(cache=True, nogil=True)
def _rehash(tab, W):
    cap = tab.shape[0]
    ncap = cap * 2
    ntab = np.zeros((ncap, W + 1), np.int64)
    nmask = ncap - 1
    for s in range(cap):
        c = tab[s, W]
        if c != 0:
            h = _HSEED
            for j in range(W):
                h = mix64(h ^ U64(tab[s, j]))
            t = np.int64(h & U64(nmask))
            while ntab[t, W] != 0:
                t = (t + 1) & nmask
            for j in range(W):
                ntab[t, j] = tab[s, j]
            ntab[t, W] = c
    return ntab


@njit(cache=True, nogil=True)
def _env_count(E, pos, wbuf, d, W):
    kind = E[0]
    if kind == ENV_EMPTY:
        return np.int64(0)
    if kind == ENV_FINITE:
        return _tab_lookup(E[4], wbuf, W)
    if kind == ENV_LINE:
        emask = E[2]
        evals = E[1]
        for j in range(d):
            if emask[j] != 0 and pos[j] != evals[j]:
                return np.int64(0)
        return E[3]
    # trumpet: x >= 1 and |y| < e^x
    x = pos[0]
    if x < 1:
        return np.int64(0)
    if x >= 22:
        return E[3]
    y = pos[1]
    ay = -y if y < 0 else y
    if float(ay) < _EXP_SMALL[x]:
        return E[3]
    return np.int64(0)


@njit(cache=True, nogil=True)
def _arrive(tab, wbuf, W, scal, bbox, pos, d):
    """Record an arrival at pos in place; the caller guarantees capacity.
    Returns the walk-arrival count after this arrival."""
    mask = tab.shape[0] - 1
    slot = np.int64(_hash_words(wbuf, W) & U64(mask))
    while True:
        c = tab[slot, W]
        if c == 0:
            for j in range(W):
                tab[slot, j] = wbuf[j]
            tab[slot, W] = 1
            scal[1] += 1
            scal[2] += 1
            for j in range(d):
                v = pos[j]
                if v < bbox[0, j]:
                    bbox[0, j] = v
                elif v > bbox[1, j]:
                    bbox[1, j] = v
            return np.int64(1)
        ok = True
        for j in range(W):
            if tab[slot, j] != wbuf[j]:
                ok = False
                break
        if ok:
            tab[slot, W] = c + 1
            return c + 1
        slot = (slot + 1) & mask


@njit(cache=True, nogil=True)
def _advance_forced(pos, tab, scal, bbox, rng, axis, d, W, E, wbuf):
    """One controlled step: the given axis moves +-1 with probability 1/2."""
    delta = np.int64(1) if (next_u64(rng) & U64(1)) == U64(0) else np.int64(-1)
    v = pos[axis] + delta
    if v > COORD_LIMIT or v < -COORD_LIMIT:
        scal[4] = 1
        return
    if scal[5] == 1:
        scal[3] += 1
    pos[axis] = v
    scal[0] += 1
    _pack(pos, d, wbuf)
    cnt = _arrive(tab, wbuf, W, scal, bbox, pos, d)
    scal[5] = cnt + _env_count(E, pos, wbuf, d, W)


@njit(cache=True, nogil=True)
def _advance_two_law(pos, tab, scal, bbox, rng, d, W, E,
                     offs1, cum1, den1, offs2, cum2, den2, wbuf):
    """One step with law 1 from fresh sites, law 2 from revisited ones."""
    fresh = scal[5] == 1
    if fresh:
        offs, cum, den = offs1, cum1, den1
    else:
        offs, cum, den = offs2, cum2, den2
    r = next_below(rng, den)
    i = 0
    while cum[i] <= r:
        i += 1
    for j in range(d):
        v = pos[j] + offs[i, j]
        if v > COORD_LIMIT or v < -COORD_LIMIT:
            scal[4] = 1
            return
    if fresh:
        scal[3] += 1
    for j in range(d):
        pos[j] += offs[i, j]
    scal[0] += 1
    _pack(pos, d, wbuf)
    cnt = _arrive(tab, wbuf, W, scal, bbox, pos, d)
    scal[5] = cnt + _env_count(E, pos, wbuf, d, W)


@njit(cache=True, nogil=True, inline="always")
def _grow_if_needed(tab, scal, W):
    if (scal[1] + 1) * 3 > tab.shape[0] * 2:
        return _rehash(tab, W)
    return tab


@njit(cache=True, nogil=True)
def k_build_table(sites, counts, d, cap):
    """Read-only packed table from explicit (site, count) rows."""
    W = (d + 1) // 2
    tab = np.zeros((cap, W + 1), np.int64)
    wbuf = np.empty(W, np.int64)
    mask = cap - 1
    for i in range(sites.shape[0]):
        _pack(sites[i], d, wbuf)
        slot = np.int64(_hash_words(wbuf, W) & U64(mask))
        while tab[slot, W] != 0:
            slot = (slot + 1) & mask
        for j in range(W):
            tab[slot, j] = wbuf[j]
        tab[slot, W] = counts[i]
    return tab


@njit(cache=True, nogil=True)
def k_init(d, cap0, E):
    """Fresh walk state at the origin (time 0 counts as the first arrival)."""
    W = (d + 1) // 2
    pos = np.zeros(d, np.int64)
    tab = np.zeros((cap0, W + 1), np.int64)
    scal = np.zeros(8, np.int64)
    bbox = np.zeros((2, d), np.int64)
    wbuf = np.empty(W, np.int64)
    _pack(pos, d, wbuf)
    slot = np.int64(_hash_words(wbuf, W) & U64(cap0 - 1))
    for j in range(W):
        tab[slot, j] = wbuf[j]
    tab[slot, W] = 1
    scal[1] = 1
    scal[2] = 1
    scal[5] = 1 + _env_count(E, pos, wbuf, d, W)
    return pos, tab, scal, bbox


@njit(cache=True, nogil=True)
def k_lookup(tab, site, d):
    """Walk-arrival count at a site (0 if never visited by the walk)."""
    W = (d + 1) // 2
    wbuf = np.empty(W, np.int64)
    _pack(site, d, wbuf)
    return _tab_lookup(tab, wbuf, W)


@njit(cache=True, nogil=True)
def k_dump_table(tab, d):
    """All (site, count) rows of a packed table, in slot order."""
    W = (d + 1) // 2
    cap = tab.shape[0]
    nrows = 0
    for s in range(cap):
        if tab[s, W] != 0:
            nrows += 1
    sites = np.empty((nrows, d), np.int64)
    counts = np.empty(nrows, np.int64)
    r = 0
    for s in range(cap):
        if tab[s, W] != 0:
            i = 0
            for j in range(W):
                w = U64(tab[s, j])
                a = np.int64(np.int32((w >> U64(32)) & _LOW32))
                b = np.int64(np.int32(w & _LOW32))
                sites[r, i] = a
                i += 1
                if i < d:
                    sites[r, i] = b
                    i += 1
            counts[r] = tab[s, W]
            r += 1
    return sites, counts


@njit(cache=True, nogil=True)
def k_run_block(pos, tab, scal, bbox, rng, dims, bstart, d, E, nsteps,
                win_lo, win_hi, traj, rec_fresh, rec_ret):
    """Batch-run the visit-staged walk with optional exact recordings.

    traj holds S_t for t in [win_lo, win_hi] (row t - win_lo); pass a
    zero-row array to disable.  Fresh-departure times and origin-return
    times are collected when the matching flag is set.
    """
    m = dims.shape[0]
    W = (d + 1) // 2
    wbuf = np.empty(W, np.int64)
    has_win = traj.shape[0] > 0
    fresh_buf = np.empty(nsteps if rec_fresh else 0, np.int64)
    ret_buf = np.empty(nsteps if rec_ret else 0, np.int64)
    nf = 0
    nr = 0
    blk_mask = np.empty(m, np.int64)
    blk_pow2 = np.empty(m, np.uint8)
    for b in range(m):
        k2 = 2 * dims[b]
        msk = np.int64(1)
        while msk < k2:
            msk *= 2
        blk_mask[b] = msk - 1
        blk_pow2[b] = 1 if (k2 & (k2 - 1)) == 0 else 0
    ekind = E[0]
    if has_win and win_lo <= scal[0] <= win_hi:
        for j in range(d):
            traj[scal[0] - win_lo, j] = pos[j]
    for _ in range(nsteps):
        t_dep = scal[0]
        # -- one visit-staged step ----------------------------------------
        tot = scal[5]
        b = np.int64(tot - 1) if tot < m else np.int64(m - 1)
        k2 = 2 * dims[b]
        msk = U64(blk_mask[b])
        r = np.int64(next_u64(rng) & msk)
        if blk_pow2[b] == 0:
            while r >= k2:
                r = np.int64(next_u64(rng) & msk)
        axis = bstart[b] + (r >> 1)
        delta = np.int64(1) if (r & 1) == 0 else np.int64(-1)
        v = pos[axis] + delta
        if v > COORD_LIMIT or v < -COORD_LIMIT:
            scal[4] = 1
            break
        if tot == 1:
            scal[3] += 1
        pos[axis] = v
        scal[0] += 1
        _pack(pos, d, wbuf)
        if (scal[1] + 1) * 3 > tab.shape[0] * 2:
            tab = _rehash(tab, W)
        mask = tab.shape[0] - 1
        slot = np.int64(_hash_words(wbuf, W) & U64(mask))
        cnt = np.int64(0)
        while True:
            c = tab[slot, W]
            if c == 0:
                for j in range(W):
                    tab[slot, j] = wbuf[j]
                tab[slot, W] = 1
                scal[1] += 1
                scal[2] += 1
                for j in range(d):
                    vv = pos[j]
                    if vv < bbox[0, j]:
                        bbox[0, j] = vv
                    elif vv > bbox[1, j]:
                        bbox[1, j] = vv
                cnt = 1
                break
            ok = True
            for j in range(W):
                if tab[slot, j] != wbuf[j]:
                    ok = False
                    break
            if ok:
                tab[slot, W] = c + 1
                cnt = c + 1
                break
            slot = (slot + 1) & mask
        if ekind == ENV_EMPTY:
            scal[5] = cnt
        else:
            scal[5] = cnt + _env_count(E, pos, wbuf, d, W)
        # -- recordings -----------------------------------------------------
        if rec_fresh and tot == 1:
            fresh_buf[nf] = t_dep
            nf += 1
        t = scal[0]
        if has_win and win_lo <= t <= win_hi:
            for j in range(d):
                traj[t - win_lo, j] = pos[j]
        if rec_ret:
            at0 = True
            for j in range(d):
                if pos[j] != 0:
                    at0 = False
                    break
            if at0:
                ret_buf[nr] = t
                nr += 1
    return tab, fresh_buf, nf, ret_buf, nr


@njit(cache=True, nogil=True)
def k_run_two_law(pos, tab, scal, bbox, rng, d, E,
                  offs1, cum1, den1, offs2, cum2, den2, nsteps):
    W = (d + 1) // 2
    wbuf = np.empty(W, np.int64)
    for _ in range(nsteps):
        tab = _grow_if_needed(tab, scal, W)
        _advance_two_law(pos, tab, scal, bbox, rng, d, W, E,
                         offs1, cum1, den1, offs2, cum2, den2, wbuf)
        if scal[4] != 0:
            break
    return tab


@njit(cache=True, nogil=True)
def k_run_controlled(pos, tab, scal, bbox, rng, d, E, code, param, nsteps):
    W = (d + 1) // 2
    wbuf = np.empty(W, np.int64)
    for _ in range(nsteps):
        if code == STRAT_FIXED:
            axis = np.int64(param)
        elif code == STRAT_ROUND_ROBIN:
            axis = scal[0] % d
        else:
            axis = next_below(rng, d)
        tab = _grow_if_needed(tab, scal, W)
        _advance_forced(pos, tab, scal, bbox, rng, axis, d, W, E, wbuf)
        if scal[4] != 0:
            break
    return tab


@njit(cache=True, nogil=True)
def k_step_forced(pos, tab, scal, bbox, rng, d, E, axis):
    W = (d + 1) // 2
    wbuf = np.empty(W, np.int64)
    tab = _grow_if_needed(tab, scal, W)
    _advance_forced(pos, tab, scal, bbox, rng, axis, d, W, E, wbuf)
    return tab


# ---------------------------------------------------------------------------
# Replica-batch estimator loops.  Every replica i derives its stream from
# (master, tag, grid_index, i), so results are independent of chunking.
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def k_mc_stage(mode, dims, bstart, d, E, n, cap0, master, tag, gidx, lo, hi):
    """Replica loop of the visit-staged walk with a mode-selected output:

    MODE_FINAL   out[:, 0:d] = S_n            (runs n steps)
    MODE_WINDOW  out[:, 0]   = origin hit in [n, 2n]  (runs 2n, early break)
    MODE_RANGE   out[:, 0]   = range size r_n
    MODE_WIDTHS  out[:, 0:d] = bounding-box widths
    MODE_RETURNS out[:, 0]   = returns in [1, n], out[:, 1] = late returns
    """
    m = dims.shape[0]
    W = (d + 1) // 2
    R = hi - lo
    ncols = d if (mode == MODE_FINAL or mode == MODE_WIDTHS) else 2
    out = np.zeros((R, ncols), np.int64)
    status = np.int64(0)
    rng = np.empty(4, np.uint64)
    wbuf = np.empty(W, np.int64)
    blk_mask = np.empty(m, np.int64)
    blk_pow2 = np.empty(m, np.uint8)
    for b in range(m):
        k2 = 2 * dims[b]
        msk = np.int64(1)
        while msk < k2:
            msk *= 2
        blk_mask[b] = msk - 1
        blk_pow2[b] = 1 if (k2 & (k2 - 1)) == 0 else 0
    ekind = E[0]
    half = n // 2
    nsteps = 2 * n if mode == MODE_WINDOW else n
    for i in range(lo, hi):
        if mode == MODE_WINDOW and n == 0:
            out[i - lo, 0] = 1
            continue
        stream_from(U64(master), U64(tag), U64(gidx), U64(i), rng)
        pos, tab, scal, bbox = k_init(d, cap0, E)
        for _ in range(nsteps):
            # -- one visit-staged step (kept verbatim; see module docstring)
            tot = scal[5]
            b = np.int64(tot - 1) if tot < m else np.int64(m - 1)
            k2 = 2 * dims[b]
            msk = U64(blk_mask[b])
            r = np.int64(next_u64(rng) & msk)
            if blk_pow2[b] == 0:
                while r >= k2:
                    r = np.int64(next_u64(rng) & msk)
            axis = bstart[b] + (r >> 1)
            delta = np.int64(1) if (r & 1) == 0 else np.int64(-1)
            v = pos[axis] + delta
            if v > COORD_LIMIT or v < -COORD_LIMIT:
                scal[4] = 1
                status = 1
                break
            if tot == 1:
                scal[3] += 1
            pos[axis] = v
            scal[0] += 1
            _pack(pos, d, wbuf)
            if (scal[1] + 1) * 3 > tab.shape[0] * 2:
                tab = _rehash(tab, W)
            mask = tab.shape[0] - 1
            slot = np.int64(_hash_words(wbuf, W) & U64(mask))
            cnt = np.int64(0)
            while True:
                c = tab[slot, W]
                if c == 0:
                    for j in range(W):
                        tab[slot, j] = wbuf[j]
                    tab[slot, W] = 1
                    scal[1] += 1
                    scal[2] += 1
                    for j in range(d):
                        vv = pos[j]
                        if vv < bbox[0, j]:
                            bbox[0, j] = vv
                        elif vv > bbox[1, j]:
                            bbox[1, j] = vv
                    cnt = 1
                    break
                ok = True
                for j in range(W):
                    if tab[slot, j] != wbuf[j]:
                        ok = False
                        break
                if ok:
                    tab[slot, W] = c + 1
                    cnt = c + 1
                    break
                slot = (slot + 1) & mask
            if ekind == ENV_EMPTY:
                scal[5] = cnt
            else:
                scal[5] = cnt + _env_count(E, pos, wbuf, d, W)
            # -- mode-specific bookkeeping
            if mode == MODE_WINDOW:
                if scal[0] >= n:
                    at0 = True
                    for j in range(d):
                        if pos[j] != 0:
                            at0 = False
                            break
                    if at0:
                        out[i - lo, 0] = 1
                        break
            elif mode == MODE_RETURNS:
                at0 = True
                for j in range(d):
                    if pos[j] != 0:
                        at0 = False
                        break
                if at0:
                    out[i - lo, 0] += 1
                    if scal[0] > half:
                        out[i - lo, 1] += 1
        if mode == MODE_FINAL:
            for j in range(d):
                out[i - lo, j] = pos[j]
        elif mode == MODE_RANGE:
            out[i - lo, 0] = scal[2]
        elif mode == MODE_WIDTHS:
            for j in range(d):
                out[i - lo, j] = bbox[1, j] - bbox[0, j]
    return out, status


@njit(cache=True, nogil=True)
def k_mc_two_law_final(d, E, offs1, cum1, den1, offs2, cum2, den2,
                       n, cap0, master, tag, gidx, lo, hi):
    W = (d + 1) // 2
    out = np.zeros((hi - lo, d), np.int64)
    status = np.int64(0)
    rng = np.empty(4, np.uint64)
    wbuf = np.empty(W, np.int64)
    for i in range(lo, hi):
        stream_from(U64(master), U64(tag), U64(gidx), U64(i), rng)
        pos, tab, scal, bbox = k_init(d, cap0, E)
        for _ in range(n):
            tab = _grow_if_needed(tab, scal, W)
            _advance_two_law(pos, tab, scal, bbox, rng, d, W, E,
                             offs1, cum1, den1, offs2, cum2, den2, wbuf)
            if scal[4] != 0:
                status = 1
                break
        for j in range(d):
            out[i - lo, j] = pos[j]
    return out, status


@njit(cache=True, nogil=True)
def k_mc_controlled(d, E, code, param, n, cap0, master, tag, gidx, lo, hi):
    ranges = np.zeros(hi - lo, np.int64)
    status = np.int64(0)
    W = (d + 1) // 2
    rng = np.empty(4, np.uint64)
    wbuf = np.empty(W, np.int64)
    for i in range(lo, hi):
        stream_from(U64(master), U64(tag), U64(gidx), U64(i), rng)
        pos, tab, scal, bbox = k_init(d, cap0, E)
        for _ in range(n):
            if code == STRAT_FIXED:
                axis = np.int64(param)
            elif code == STRAT_ROUND_ROBIN:
                axis = scal[0] % d
            else:
                axis = next_below(rng, d)
            tab = _grow_if_needed(tab, scal, W)
            _advance_forced(pos, tab, scal, bbox, rng, axis, d, W, E, wbuf)
            if scal[4] != 0:
                status = 1
                break
        ranges[i - lo] = scal[2]
    return ranges, status


@njit(cache=True, nogil=True)
def k_mc_recon(d1, d2, n, cap0, master, tag, gidx, lo, hi, invert):
    """Composite positions built from two independent nearest-neighbor walks.

    The first walk feeds the leading d1 coordinates and is consumed on
    departures from fresh sites, the second feeds the trailing d2
    coordinates on revisit departures (roles swap when invert is set).
    """
    d = d1 + d2
    W = (d + 1) // 2
    out = np.zeros((hi - lo, d), np.int64)
    status = np.int64(0)
    rng_u = np.empty(4, np.uint64)
    rng_v = np.empty(4, np.uint64)
    wbuf = np.empty(W, np.int64)
    E = (np.int64(ENV_EMPTY), np.zeros(d, np.int64), np.zeros(d, np.int64),
         np.int64(0), np.zeros((1, W + 1), np.int64))
    mask_u = np.int64(1)
    while mask_u < 2 * d1:
        mask_u *= 2
    mask_u -= 1
    pow2_u = (2 * d1) & (2 * d1 - 1) == 0
    mask_v = np.int64(1)
    while mask_v < 2 * d2:
        mask_v *= 2
    mask_v -= 1
    pow2_v = (2 * d2) & (2 * d2 - 1) == 0
    for i in range(lo, hi):
        base = fold(fold(fold(U64(master), U64(tag)), U64(gidx)), U64(i))
        stream_init(fold(base, U64(1)), rng_u)
        stream_init(fold(base, U64(2)), rng_v)
        pos, tab, scal, bbox = k_init(d, cap0, E)
        for _ in range(n):
            fresh = scal[5] == 1
            use_first = fresh if invert == 0 else not fresh
            if use_first:
                r = np.int64(next_u64(rng_u) & U64(mask_u))
                if not pow2_u:
                    while r >= 2 * d1:
                        r = np.int64(next_u64(rng_u) & U64(mask_u))
                axis = r >> 1
            else:
                r = np.int64(next_u64(rng_v) & U64(mask_v))
                if not pow2_v:
                    while r >= 2 * d2:
                        r = np.int64(next_u64(rng_v) & U64(mask_v))
                axis = d1 + (r >> 1)
            delta = np.int64(1) if (r & 1) == 0 else np.int64(-1)
            v = pos[axis] + delta
            if v > COORD_LIMIT or v < -COORD_LIMIT:
                status = 1
                break
            if fresh:
                scal[3] += 1
            pos[axis] = v
            scal[0] += 1
            _pack(pos, d, wbuf)
            if (scal[1] + 1) * 3 > tab.shape[0] * 2:
                tab = _rehash(tab, W)
            mask = tab.shape[0] - 1
            slot = np.int64(_hash_words(wbuf, W) & U64(mask))
            cnt = np.int64(0)
            while True:
                c = tab[slot, W]
                if c == 0:
                    for j in range(W):
                        tab[slot, j] = wbuf[j]
                    tab[slot, W] = 1
                    scal[1] += 1
                    scal[2] += 1
                    cnt = 1
                    break
                ok = True
                for j in range(W):
                    if tab[slot, j] != wbuf[j]:
                        ok = False
                        break
                if ok:
                    tab[slot, W] = c + 1
                    cnt = c + 1
                    break
                slot = (slot + 1) & mask
            scal[5] = cnt
        for j in range(d):
            out[i - lo, j] = pos[j]
    return out, status


# ---------------------------------------------------------------------------
# Plain 2D simple-random-walk kernels (reference estimates).
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def k_srw_traj(key, n, x0, y0):
    traj = np.empty((n + 1, 2), np.int64)
    rng = np.empty(4, np.uint64)
    stream_init(U64(key), rng)
    x = np.int64(x0)
    y = np.int64(y0)
    traj[0, 0] = x
    traj[0, 1] = y
    for k in range(1, n + 1):
        r = next_u64(rng) & U64(3)
        if r == U64(0):
            x += 1
        elif r == U64(1):
            x -= 1
        elif r == U64(2):
            y += 1
        else:
            y -= 1
        traj[k, 0] = x
        traj[k, 1] = y
    return traj


@njit(cache=True, nogil=True)
def k_srw_returns(n, master, tag, gidx, lo, hi):
    tot = np.zeros(hi - lo, np.int64)
    late = np.zeros(hi - lo, np.int64)
    rng = np.empty(4, np.uint64)
    half = n // 2
    for i in range(lo, hi):
        stream_from(U64(master), U64(tag), U64(gidx), U64(i), rng)
        x = np.int64(0)
        y = np.int64(0)
        for k in range(1, n + 1):
            r = next_u64(rng) & U64(3)
            if r == U64(0):
                x += 1
            elif r == U64(1):
                x -= 1
            elif r == U64(2):
                y += 1
            else:
                y -= 1
            if x == 0 and y == 0:
                tot[i - lo] += 1
                if k > half:
                    late[i - lo] += 1
    return tot, late


@njit(cache=True, nogil=True)
def k_srw_window(t, n2, master, tag, gidx, lo, hi):
    """Flags: origin appears among U_t..U_n2 (time 0 counts when t = 0)."""
    hits = np.zeros(hi - lo, np.uint8)
    rng = np.empty(4, np.uint64)
    for i in range(lo, hi):
        if t == 0:
            hits[i - lo] = 1
            continue
        stream_from(U64(master), U64(tag), U64(gidx), U64(i), rng)
        x = np.int64(0)
        y = np.int64(0)
        for k in range(1, n2 + 1):
            r = next_u64(rng) & U64(3)
            if r == U64(0):
                x += 1
            elif r == U64(1):
                x -= 1
            elif r == U64(2):
                y += 1
            else:
                y -= 1
            if k >= t and x == 0 and y == 0:
                hits[i - lo] = 1
                break
    return hits


@njit(cache=True, nogil=True)
def k_srw_local_time(n, cap0, master, tag, gidx, lo, hi):
    """Maximum local time over sites, walking to time n (arrivals 0..n)."""
    nstar = np.zeros(hi - lo, np.int64)
    rng = np.empty(4, np.uint64)
    pos = np.empty(2, np.int64)
    wbuf = np.empty(1, np.int64)
    for i in range(lo, hi):
        stream_from(U64(master), U64(tag), U64(gidx), U64(i), rng)
        tab = np.zeros((cap0, 2), np.int64)
        pos[0] = 0
        pos[1] = 0
        used = np.int64(1)
        _pack(pos, 2, wbuf)
        slot = np.int64(_hash_words(wbuf, 1) & U64(cap0 - 1))
        tab[slot, 1] = 1
        best = np.int64(1)
        for _ in range(n):
            r = next_u64(rng) & U64(3)
            if r == U64(0):
                pos[0] += 1
            elif r == U64(1):
                pos[0] -= 1
            elif r == U64(2):
                pos[1] += 1
            else:
                pos[1] -= 1
            cap = tab.shape[0]
            if (used + 1) * 3 > cap * 2:
                tab = _rehash(tab, 1)
                cap = tab.shape[0]
            mask = cap - 1
            _pack(pos, 2, wbuf)
            slot = np.int64(_hash_words(wbuf, 1) & U64(mask))
            while True:
                c = tab[slot, 1]
                if c == 0:
                    tab[slot, 0] = wbuf[0]
                    tab[slot, 1] = 1
                    used += 1
                    break
                if tab[slot, 0] == wbuf[0]:
                    tab[slot, 1] = c + 1
                    if c + 1 > best:
                        best = c + 1
                    break
                slot = (slot + 1) & mask
        nstar[i - lo] = best
    return nstar


@njit(cache=True, nogil=True)
def k_srw_range(n, cap0, master, tag, gidx, lo, hi):
    ranges = np.zeros(hi - lo, np.int64)
    rng = np.empty(4, np.uint64)
    pos = np.empty(2, np.int64)
    wbuf = np.empty(1, np.int64)
    for i in range(lo, hi):
        stream_from(U64(master), U64(tag), U64(gidx), U64(i), rng)
        tab = np.zeros((cap0, 2), np.int64)
        pos[0] = 0
        pos[1] = 0
        used = np.int64(1)
        _pack(pos, 2, wbuf)
        slot = np.int64(_hash_words(wbuf, 1) & U64(cap0 - 1))
        tab[slot, 1] = 1
        rsize = np.int64(1)
        for _ in range(n):
            r = next_u64(rng) & U64(3)
            if r == U64(0):
                pos[0] += 1
            elif r == U64(1):
                pos[0] -= 1
            elif r == U64(2):
                pos[1] += 1
            else:
                pos[1] -= 1
            cap = tab.shape[0]
            if (used + 1) * 3 > cap * 2:
                tab = _rehash(tab, 1)
                cap = tab.shape[0]
            mask = cap - 1
            _pack(pos, 2, wbuf)
            slot = np.int64(_hash_words(wbuf, 1) & U64(mask))
            while True:
                c = tab[slot, 1]
                if c == 0:
                    tab[slot, 0] = wbuf[0]
                    tab[slot, 1] = 1
                    used += 1
                    rsize += 1
                    break
                if tab[slot, 0] == wbuf[0]:
                    tab[slot, 1] = c + 1
                    break
                slot = (slot + 1) & mask
        ranges[i - lo] = rsize
    return ranges


@njit(cache=True, nogil=True)
def k_srw_hit(x0, y0, m_inner, m_outer, max_steps, master, tag, gidx, lo, hi):
    """Race of annulus entries from (x0, y0): 1 if sup-norm hits m_inner
    before m_outer, 0 for the reverse, -1 if neither within max_steps."""
    out = np.empty(hi - lo, np.int8)
    rng = np.empty(4, np.uint64)
    for i in range(lo, hi):
        stream_from(U64(master), U64(tag), U64(gidx), U64(i), rng)
        x = np.int64(x0)
        y = np.int64(y0)
        res = np.int8(-1)
        for _ in range(max_steps):
            r = next_u64(rng) & U64(3)
            if r == U64(0):
                x += 1
            elif r == U64(1):
                x -= 1
            elif r == U64(2):
                y += 1
            else:
                y -= 1
            ax = -x if x < 0 else x
            ay = -y if y < 0 else y
            nrm = ax if ax > ay else ay
            if nrm == m_inner:
                res = 1
                break
            if nrm == m_outer:
                res = 0
                break
        out[i - lo] = res
    return out


@njit(cache=True, nogil=True)
def k_srw_tau(m_annulus, horizon, master, tag, gidx, lo, hi):
    """First time the sup-norm equals m_annulus (-1 if not within horizon)."""
    out = np.empty(hi - lo, np.int64)
    rng = np.empty(4, np.uint64)
    for i in range(lo, hi):
        stream_from(U64(master), U64(tag), U64(gidx), U64(i), rng)
        x = np.int64(0)
        y = np.int64(0)
        res = np.int64(-1)
        for k in range(1, horizon + 1):
            r = next_u64(rng) & U64(3)
            if r == U64(0):
                x += 1
            elif r == U64(1):
                x -= 1
            elif r == U64(2):
                y += 1
            else:
                y -= 1
            ax = -x if x < 0 else x
            ay = -y if y < 0 else y
            nrm = ax if ax > ay else ay
            if nrm == m_annulus:
                res = k
                break
        out[i - lo] = res
    return out


# host-facing wrappers preserving the one-output-per-quantity signatures


def k_mc_final(dims, bstart, d, E, n, cap0, master, tag, gidx, lo, hi):
    out, status = k_mc_stage(MODE_FINAL, dims, bstart, d, E, n, cap0,
                             master, tag, gidx, lo, hi)
    return out, status


def k_mc_window(dims, bstart, d, E, n, cap0, master, tag, gidx, lo, hi):
    out, status = k_mc_stage(MODE_WINDOW, dims, bstart, d, E, n, cap0,
                             master, tag, gidx, lo, hi)
    return out[:, 0].astype(np.uint8), status


def k_mc_range(dims, bstart, d, E, n, cap0, master, tag, gidx, lo, hi):
    out, status = k_mc_stage(MODE_RANGE, dims, bstart, d, E, n, cap0,
                             master, tag, gidx, lo, hi)
    return out[:, 0].copy(), status


def k_mc_widths(dims, bstart, d, E, n, cap0, master, tag, gidx, lo, hi):
    out, status = k_mc_stage(MODE_WIDTHS, dims, bstart, d, E, n, cap0,
                             master, tag, gidx, lo, hi)
    return out, status


def k_mc_returns(dims, bstart, d, E, n, cap0, master, tag, gidx, lo, hi):
    out, status = k_mc_stage(MODE_RETURNS, dims, bstart, d, E, n, cap0,
                             master, tag, gidx, lo, hi)
    return out[:, 0].copy(), out[:, 1].copy(), status
