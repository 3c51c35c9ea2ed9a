"""Independent brute-force oracles for the tests.

Everything here recomputes expectations from first principles (explicit path
enumeration, dynamic programming, linear solves) without touching the
package's own enumeration module, so oracle and implementation can disagree.
"""

from fractions import Fraction
from itertools import product

import numpy as np


def iter_walk_paths(dims, n, env_pre=None):
    """Yield (probability, trajectory) over all length-n paths of the
    visit-staged walk.  Trajectories are tuples of sites including S_0."""
    env_pre = env_pre or (lambda site: 0)
    m = len(dims)
    d = sum(dims)
    starts = []
    acc = 0
    for x in dims:
        starts.append(acc)
        acc += x

    def moves_for(block):
        out = []
        for j in range(dims[block]):
            for delta in (1, -1):
                out.append((starts[block] + j, delta))
        return out

    def rec(traj, visits, prob):
        if len(traj) == n + 1:
            yield prob, tuple(traj)
            return
        here = traj[-1]
        total = visits[here] + env_pre(here)
        block = min(total, m) - 1
        opts = moves_for(block)
        p = prob * Fraction(1, len(opts))
        for axis, delta in opts:
            nxt = list(here)
            nxt[axis] += delta
            nxt = tuple(nxt)
            visits[nxt] = visits.get(nxt, 0) + 1
            traj.append(nxt)
            yield from rec(traj, visits, p)
            traj.pop()
            if visits[nxt] == 1:
                del visits[nxt]
            else:
                visits[nxt] -= 1

    origin = (0,) * d
    yield from rec([origin], {origin: 1}, Fraction(1))


def range_of(traj):
    return len(set(traj))


def extent(traj, axis):
    vals = [site[axis] for site in traj]
    return max(vals) - min(vals)


def iter_srw2d_paths(n):
    """All 4^n equally weighted 2D SRW paths (tuples of sites incl. U_0)."""
    steps = ((1, 0), (-1, 0), (0, 1), (0, -1))
    w = Fraction(1, 4 ** n)
    for combo in product(steps, repeat=n):
        x, y = 0, 0
        traj = [(0, 0)]
        for dx, dy in combo:
            x += dx
            y += dy
            traj.append((x, y))
        yield w, tuple(traj)


def tau_annulus_pmf(target_norm, depth):
    """Exact P[tau = k] for k <= depth, tau = first time sup-norm == target_norm,
    via a Fraction-valued DP over positions inside the box."""
    pmf = {}
    dist = {(0, 0): Fraction(1)}
    quarter = Fraction(1, 4)
    for k in range(1, depth + 1):
        nxt = {}
        hit = Fraction(0)
        for (x, y), p in dist.items():
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nx, ny = x + dx, y + dy
                if max(abs(nx), abs(ny)) == target_norm:
                    hit += p * quarter
                else:
                    key = (nx, ny)
                    nxt[key] = nxt.get(key, Fraction(0)) + p * quarter
        pmf[k] = hit
        dist = nxt
    return pmf


def hitting_prob_exact(start, outer_norm):
    """P_start[sup-norm reaches 1 before outer_norm], by linear solve over the
    transient states 1 < sup-norm < outer_norm plus the origin."""
    states = []
    index = {}
    for x in range(-outer_norm + 1, outer_norm):
        for y in range(-outer_norm + 1, outer_norm):
            nrm = max(abs(x), abs(y))
            if nrm != 1:  # norm-1 sites are absorbing successes
                index[(x, y)] = len(states)
                states.append((x, y))
    nstate = len(states)
    A = np.eye(nstate)
    b = np.zeros(nstate)
    for (x, y), i in index.items():
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, ny = x + dx, y + dy
            nrm = max(abs(nx), abs(ny))
            if nrm == 1:
                b[i] += 0.25
            elif nrm >= outer_norm:
                pass  # absorbed as failure
            else:
                A[i, index[(nx, ny)]] -= 0.25
    sol = np.linalg.solve(A, b)

    def value(site):
        nrm = max(abs(site[0]), abs(site[1]))
        if nrm == 1:
            return 1.0
        if nrm >= outer_norm:
            return 0.0
        return float(sol[index[site]])

    s = tuple(start)
    if max(abs(s[0]), abs(s[1])) == 1:
        # entry times require k > 0: unroll one step from a norm-1 start
        return sum(0.25 * value((s[0] + dx, s[1] + dy))
                   for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)))
    return value(s)


def srw1d_expected_range(n, replicas, rng):
    """Mean range of the 1D SRW by direct numpy simulation."""
    steps = rng.choice((-1, 1), size=(replicas, n))
    paths = np.cumsum(steps, axis=1)
    widths = (np.maximum(np.maximum.accumulate(paths, axis=1)[:, -1], 0)
              - np.minimum(np.minimum.accumulate(paths, axis=1)[:, -1], 0))
    return float(np.mean(widths + 1)), float(np.std(widths + 1) / np.sqrt(replicas))
