"""2D simple-random-walk reference estimates: local times, annulus hitting,
return windows, range sizes.

Trajectory operations are exact bookkeeping over an explicit path array and
can always be recomputed by a naive pass; the estimate_* functions run the
same dynamics inside compiled replica loops.  The norm throughout is the
sup-norm, so the annulus condition r < |U| <= r+1 is the exact integer test
|U| == floor(r) + 1.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import _kernels as K
from . import streams as st
from .errors import ConfigurationError
from .estimators import (Estimate, ReturnsSummary, _normalize_range,
                         _returns_summary, bernoulli_estimate, config_digest,
                         mean_estimate, run_chunked)
from .lattice import Site

Z95 = 1.959963984540054


def sup_norm(site) -> int:
    return max(abs(int(c)) for c in site)


def run_srw2d(seed: int, n: int, start: tuple[int, int] = (0, 0)) -> np.ndarray:
    """Trajectory U_0..U_n as an (n+1, 2) int array; U_0 = start."""
    if n < 0:
        raise ConfigurationError("need n >= 0", field="n")
    key = st.derive_key(seed, st.TAG_SRW_TRAJ)
    return K.k_srw_traj(st.as_u64(key), n, int(start[0]), int(start[1]))


@dataclass(frozen=True)
class LocalTimeProfile:
    """Visit counts over sites for times 0..n, their maximum, and its argmax."""

    counts: Mapping[Site, int]
    maximum: int
    argmax: Site


def max_local_time(trajectory: np.ndarray) -> LocalTimeProfile:
    if len(trajectory) == 0:
        raise ConfigurationError("empty trajectory")
    counts = Counter(tuple(int(c) for c in row) for row in trajectory)
    site, best = max(counts.items(), key=lambda kv: (kv[1], kv[0]))
    return LocalTimeProfile(dict(counts), best, site)


def tau_annulus(trajectory: np.ndarray, r: float) -> int | None:
    """First k > 0 with r < |U_k| <= r+1 (sup-norm), None if not reached."""
    if r < 0:
        raise ConfigurationError("radius must be >= 0", field="r")
    target = math.floor(r) + 1
    norms = np.abs(trajectory[1:]).max(axis=1)
    idx = np.nonzero(norms == target)[0]
    return int(idx[0]) + 1 if len(idx) else None


@dataclass(frozen=True)
class MeanSummary:
    n: int
    replicas: int
    total: int
    total_sq: int
    estimate: Estimate


@dataclass(frozen=True)
class SrwWindowEstimate:
    t: int
    n: int
    replicas: int
    successes: int
    estimate: Estimate


@dataclass(frozen=True)
class HittingEstimate:
    start: Site
    outer_radius: float
    replicas: int
    successes: int
    horizon_misses: int
    estimate: Estimate


def _srw_cap(n: int) -> int:
    # expected SRW range is ~ pi n / ln n; growth covers unlucky replicas
    guess = int(5 * n / max(math.log(max(n, 2)), 1.0)) + 64
    cap = 64
    while cap < min(guess, n + 2) * 3 // 2:
        cap *= 2
    return cap


def estimate_max_local_time(n: int, replicas: int, seed: int, *,
                            grid_index: int = 0, workers: int = 1,
                            replica_range=None, digest: str = "") -> MeanSummary:
    """Mean of the maximum local time N*_n over replicas."""
    if n < 0:
        raise ConfigurationError("need n >= 0", field="n")
    lo, hi = _normalize_range(replicas, replica_range)
    if not digest:
        digest = config_digest({"kind": "srw-local-time", "n": n,
                                "replicas": replicas, "seed": seed})
    parts = run_chunked(
        lambda a, b: (K.k_srw_local_time(n, _srw_cap(n), st.as_u64(seed), st.TAG_SRW_NSTAR,
                                         grid_index, a, b),),
        lo, hi, workers)
    vals = np.concatenate([p[0] for p in parts])
    s, s2 = int(vals.sum()), sum(int(v) ** 2 for v in vals)
    return MeanSummary(n, hi - lo, s, s2, mean_estimate(s, s2, hi - lo, seed, digest))


def estimate_return_window_srw(t: int, n: int, replicas: int, seed: int, *,
                               grid_index: int = 0, workers: int = 1,
                               replica_range=None, digest: str = "") -> SrwWindowEstimate:
    """P[origin appears among U_t..U_2n] with a Wilson 95% CI."""
    if not 0 <= t <= 2 * n:
        raise ConfigurationError("need 0 <= t <= 2n", field="t")
    lo, hi = _normalize_range(replicas, replica_range)
    if not digest:
        digest = config_digest({"kind": "srw-return-window", "t": t, "n": n,
                                "replicas": replicas, "seed": seed})
    parts = run_chunked(
        lambda a, b: (K.k_srw_window(t, 2 * n, st.as_u64(seed), st.TAG_SRW_WINDOW,
                                     grid_index, a, b),),
        lo, hi, workers)
    successes = int(sum(int(p[0].sum()) for p in parts))
    return SrwWindowEstimate(t, n, hi - lo, successes,
                             bernoulli_estimate(successes, hi - lo, seed, digest))


def range_size_srw(n: int, replicas: int, seed: int, *, grid_index: int = 0,
                   workers: int = 1, replica_range=None,
                   digest: str = "") -> MeanSummary:
    """Mean range size of the simple random walk at time n."""
    if n < 1:
        raise ConfigurationError("need n >= 1", field="n")
    lo, hi = _normalize_range(replicas, replica_range)
    if not digest:
        digest = config_digest({"kind": "srw-range", "n": n,
                                "replicas": replicas, "seed": seed})
    parts = run_chunked(
        lambda a, b: (K.k_srw_range(n, _srw_cap(n), st.as_u64(seed), st.TAG_SRW_RANGE,
                                    grid_index, a, b),),
        lo, hi, workers)
    vals = np.concatenate([p[0] for p in parts])
    s, s2 = int(vals.sum()), sum(int(v) ** 2 for v in vals)
    return MeanSummary(n, hi - lo, s, s2, mean_estimate(s, s2, hi - lo, seed, digest))


def estimate_returns_srw(n: int, replicas: int, seed: int, *, grid_index: int = 0,
                         workers: int = 1, replica_range=None,
                         digest: str = "") -> ReturnsSummary:
    """Origin-return counts in [1, n] for the recurrent 2D baseline."""
    if n < 1:
        raise ConfigurationError("need n >= 1", field="n")
    lo, hi = _normalize_range(replicas, replica_range)
    if not digest:
        digest = config_digest({"kind": "srw-returns", "n": n,
                                "replicas": replicas, "seed": seed})
    parts = run_chunked(
        lambda a, b: K.k_srw_returns(n, st.as_u64(seed), st.TAG_SRW_RETURNS, grid_index, a, b),
        lo, hi, workers)
    tot = np.concatenate([p[0] for p in parts])
    late = np.concatenate([p[1] for p in parts])
    return _returns_summary(tot, late, n, seed, digest)


def estimate_hitting_before_annulus(x: tuple[int, int], R: float, replicas: int,
                                    seed: int, *, grid_index: int = 0,
                                    workers: int = 1, replica_range=None,
                                    max_steps: int | None = None,
                                    digest: str = "") -> HittingEstimate:
    """P_x[inner annulus (sup-norm 1) is reached before the outer one].

    The outer annulus is r < |U| <= r+1 at r = R, i.e. sup-norm floor(R)+1;
    a generous step horizon guards against unbounded replicas and misses are
    reported, not silently dropped.
    """
    start = (int(x[0]), int(x[1]))
    nrm = sup_norm(start)
    if nrm == 0:
        raise ConfigurationError("start must differ from the origin", field="x")
    if nrm > R:
        raise ConfigurationError("start must satisfy |x| <= R", field="x")
    m_outer = math.floor(R) + 1
    if max_steps is None:
        max_steps = max(10_000, 100 * m_outer * m_outer)
    lo, hi = _normalize_range(replicas, replica_range)
    if not digest:
        digest = config_digest({"kind": "srw-hitting", "x": start, "R": R,
                                "replicas": replicas, "seed": seed})
    parts = run_chunked(
        lambda a, b: (K.k_srw_hit(start[0], start[1], 1, m_outer, max_steps,
                                  st.as_u64(seed), st.TAG_SRW_HIT, grid_index, a, b),),
        lo, hi, workers)
    res = np.concatenate([p[0] for p in parts])
    misses = int(np.count_nonzero(res == -1))
    successes = int(np.count_nonzero(res == 1))
    decided = (hi - lo) - misses
    if decided == 0:
        est = Estimate(math.nan, math.nan, math.nan, math.nan, 0, seed, digest)
    else:
        est = bernoulli_estimate(successes, decided, seed, digest)
    return HittingEstimate(start, R, hi - lo, successes, misses, est)


@dataclass(frozen=True)
class TauSummary:
    radius: float
    horizon: int
    replicas: int
    reached: int
    sum_tau: int
    sum_tau_sq: int
    reach_estimate: Estimate
    mean_tau_estimate: Estimate


def estimate_tau_annulus(r: float, horizon: int, replicas: int, seed: int, *,
                         grid_index: int = 0, workers: int = 1,
                         replica_range=None, digest: str = "") -> TauSummary:
    """Distribution summary of the annulus entry time from the origin,
    truncated at a horizon: P[tau <= horizon] and E[tau | tau <= horizon]."""
    if r < 0:
        raise ConfigurationError("radius must be >= 0", field="r")
    target = math.floor(r) + 1
    lo, hi = _normalize_range(replicas, replica_range)
    if not digest:
        digest = config_digest({"kind": "srw-tau", "r": r, "horizon": horizon,
                                "replicas": replicas, "seed": seed})
    parts = run_chunked(
        lambda a, b: (K.k_srw_tau(target, horizon, st.as_u64(seed), st.TAG_SRW_TAU,
                                  grid_index, a, b),),
        lo, hi, workers)
    taus = np.concatenate([p[0] for p in parts])
    hit = taus >= 0
    reached = int(np.count_nonzero(hit))
    s = int(taus[hit].sum())
    s2 = sum(int(v) ** 2 for v in taus[hit])
    reach_est = bernoulli_estimate(reached, hi - lo, seed, digest)
    if reached >= 1:
        mean_est = mean_estimate(s, s2, reached, seed, digest)
    else:
        mean_est = Estimate(math.nan, math.nan, math.nan, math.nan, 0, seed, digest)
    return TauSummary(r, horizon, hi - lo, reached, s, s2, reach_est, mean_est)
