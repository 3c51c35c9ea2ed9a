"""Monte Carlo estimators over replica batches, with exact merge semantics.

Every estimator reduces its replicas to *exact* sufficient statistics
(integer or rational sums), and only converts to floats when the point
estimate and confidence interval are derived.  Splitting a replica range
into parts and merging the parts therefore reproduces the monolithic run
bit-exactly, independent of worker count.

Replica i of grid point g draws from the stream (master_seed, kind_tag, g, i).
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import chi2 as _chi2

from . import _kernels as K
from . import streams as st
from .errors import ConfigurationError, CoordinateOverflowError
from .lattice import Environment, Partition, Site
from .strategies import Strategy
from .streams import Stream
from .walk import WalkState, WalkView, env_kernel_args

Z95 = 1.959963984540054  # standard normal 97.5% quantile


def config_digest(params: Mapping) -> str:
    """Stable hex digest of a canonical-JSON parameter mapping."""
    blob = json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Estimate:
    """Point estimate with spread, sample count, and seed provenance."""

    point: float
    stderr: float
    ci_lo: float
    ci_hi: float
    replicas: int
    master_seed: int
    digest: str = ""
    method: str = "mean"


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion (well-behaved at small p)."""
    if trials == 0:
        return (0.0, 1.0)
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials * trials))
    # the bounds collapse exactly at the extremes; don't let rounding blur them
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return (lo, hi)


def bernoulli_estimate(successes: int, trials: int, master_seed: int,
                       digest: str = "") -> Estimate:
    p = successes / trials
    lo, hi = wilson_interval(successes, trials)
    se = math.sqrt(p * (1.0 - p) / trials)
    return Estimate(p, se, lo, hi, trials, master_seed, digest, method="wilson")


def mean_estimate(total, total_sq, n: int, master_seed: int, digest: str = "",
                  scale: Fraction | int = 1) -> Estimate:
    """Normal-approximation mean CI from exact sums of x and x^2.

    ``scale`` divides the summed quantity (e.g. 1/n for range ratios);
    sums stay exact so merged batches finalize identically.
    """
    mean = Fraction(total, n)
    if scale != 1:
        mean = mean / scale
    point = float(mean)
    if n < 2:
        return Estimate(point, 0.0, point, point, n, master_seed, digest)
    var = (Fraction(total_sq) - Fraction(total) ** 2 / n) / (n - 1)
    var = var / (Fraction(scale) ** 2)
    se = math.sqrt(max(0.0, float(var)) / n)
    return Estimate(point, se, point - Z95 * se, point + Z95 * se,
                    n, master_seed, digest)


# -- replica fan-out ---------------------------------------------------------

def split_range(lo: int, hi: int, workers: int) -> list[tuple[int, int]]:
    total = hi - lo
    w = max(1, min(workers, total)) if total > 0 else 1
    base = total // w
    rem = total % w
    spans = []
    a = lo
    for i in range(w):
        b = a + base + (1 if i < rem else 0)
        spans.append((a, b))
        a = b
    return spans


def run_chunked(call, lo: int, hi: int, workers: int) -> list:
    """Run call(a, b) over contiguous chunks of [lo, hi), in order.

    The kernels release the GIL, so chunks genuinely overlap when workers > 1;
    outputs are merged in chunk order, making results worker-count independent.
    """
    spans = split_range(lo, hi, workers)
    if len(spans) == 1 or workers <= 1:
        return [call(a, b) for a, b in spans]
    with ThreadPoolExecutor(max_workers=len(spans)) as pool:
        futures = [pool.submit(call, a, b) for a, b in spans]
        return [f.result() for f in futures]


def _cap_for(steps: int, expected: int | None = None) -> int:
    bound = steps + 2 if expected is None else min(steps + 2, expected)
    need = max(64, bound * 3 // 2)
    cap = 64
    while cap < need:
        cap *= 2
    return cap


def _check_status(parts, idx: int = -1):
    if any(int(p[idx]) != 0 for p in parts):
        raise CoordinateOverflowError("a replica left the signed 32-bit coordinate range")


def _normalize_range(replicas: int, replica_range) -> tuple[int, int]:
    if replicas < 1:
        raise ConfigurationError("replicas must be >= 1", field="replicas")
    if replica_range is None:
        return 0, replicas
    lo, hi = int(replica_range[0]), int(replica_range[1])
    if not (0 <= lo < hi <= replicas):
        raise ConfigurationError(
            f"replica range [{lo}, {hi}) not inside [0, {replicas})", field="replica_range")
    return lo, hi


def counts_from_positions(positions: np.ndarray) -> dict[Site, int]:
    vals, cnts = np.unique(positions, axis=0, return_counts=True)
    return {tuple(int(c) for c in vals[i]): int(cnts[i]) for i in range(len(cnts))}


# -- estimators --------------------------------------------------------------

@dataclass(frozen=True)
class ReturnWindowEstimate:
    n: int
    replicas: int
    successes: int
    estimate: Estimate


def estimate_return_window(partition: Partition, environment: Environment | None,
                           n: int, replicas: int, seed: int, *,
                           grid_index: int = 0, workers: int = 1,
                           replica_range=None, digest: str = "") -> ReturnWindowEstimate:
    """P[origin appears among S_n..S_2n] with a Wilson 95% CI."""
    env = Environment.empty() if environment is None else environment
    env.validate_for(partition)
    if n < 0:
        raise ConfigurationError("window start must be >= 0", field="n")
    lo, hi = _normalize_range(replicas, replica_range)
    dims = np.asarray(partition.dims, np.int64)
    bstart = np.asarray(partition.block_starts, np.int64)
    E = env_kernel_args(env, partition)
    cap0 = _cap_for(2 * n)
    if not digest:
        digest = config_digest({"kind": "return-window", "partition": partition.dims,
                                "environment": env.to_json_dict(), "n": n,
                                "replicas": replicas, "seed": seed})
    parts = run_chunked(
        lambda a, b: K.k_mc_window(dims, bstart, partition.d, E, n, cap0,
                                   st.as_u64(seed), st.TAG_RETURN_WINDOW, grid_index, a, b),
        lo, hi, workers)
    _check_status(parts)
    successes = int(sum(int(p[0].sum()) for p in parts))
    return ReturnWindowEstimate(
        n=n, replicas=hi - lo, successes=successes,
        estimate=bernoulli_estimate(successes, hi - lo, seed, digest))


@dataclass(frozen=True)
class RangeStats:
    n: int
    replicas: int
    sum_range: int
    sum_range_sq: int
    min_range: int
    max_range: int
    upper_violations: int
    lower_violations: int
    bound_constant: float
    ratio_estimate: Estimate


def estimate_range_stats(partition: Partition, n: int, replicas: int, seed: int,
                         bound_constant: float = 10.0, *, grid_index: int = 0,
                         workers: int = 1, replica_range=None,
                         digest: str = "") -> RangeStats:
    """Distribution of the range size r_n, with counts of excursions outside
    [n/(C ln n)^2, 0.99 n]."""
    if n < 2:
        raise ConfigurationError("range statistics need n >= 2 (ln n > 0)", field="n")
    if bound_constant <= 0:
        raise ConfigurationError("bound constant must be > 0", field="bound_constant")
    lo, hi = _normalize_range(replicas, replica_range)
    dims = np.asarray(partition.dims, np.int64)
    bstart = np.asarray(partition.block_starts, np.int64)
    E = env_kernel_args(Environment.empty(), partition)
    if not digest:
        digest = config_digest({"kind": "range-stats", "partition": partition.dims,
                                "n": n, "replicas": replicas, "seed": seed,
                                "C": bound_constant})
    parts = run_chunked(
        lambda a, b: K.k_mc_range(dims, bstart, partition.d, E, n, _cap_for(n),
                                  st.as_u64(seed), st.TAG_RANGE_STATS, grid_index, a, b),
        lo, hi, workers)
    _check_status(parts)
    ranges = np.concatenate([p[0] for p in parts])
    sum_r = int(ranges.sum())
    sum_r2 = sum(int(r) ** 2 for r in ranges)
    lower_thr = n / (bound_constant * math.log(n)) ** 2
    upper = int(np.count_nonzero(100 * ranges > 99 * n))
    lower = int(np.count_nonzero(ranges < lower_thr))
    est = mean_estimate(sum_r, sum_r2, hi - lo, seed, digest, scale=n)
    return RangeStats(n, hi - lo, sum_r, sum_r2, int(ranges.min()), int(ranges.max()),
                      upper, lower, bound_constant, est)


@dataclass(frozen=True)
class ReturnsSummary:
    n: int
    replicas: int
    sum_returns: int
    sum_returns_sq: int
    sum_late: int
    sum_late_sq: int
    histogram: Mapping[int, int]
    mean_estimate: Estimate
    late_estimate: Estimate


def _returns_summary(tot: np.ndarray, late: np.ndarray, n: int, seed: int,
                     digest: str) -> ReturnsSummary:
    R = len(tot)
    s, s2 = int(tot.sum()), sum(int(x) ** 2 for x in tot)
    sl, sl2 = int(late.sum()), sum(int(x) ** 2 for x in late)
    hist = dict(sorted(Counter(int(x) for x in tot).items()))
    return ReturnsSummary(n, R, s, s2, sl, sl2, hist,
                          mean_estimate(s, s2, R, seed, digest),
                          mean_estimate(sl, sl2, R, seed, digest))


def estimate_returns_to_origin(partition: Partition, n: int, replicas: int, seed: int,
                               *, environment: Environment | None = None,
                               grid_index: int = 0, workers: int = 1,
                               replica_range=None, digest: str = "") -> ReturnsSummary:
    """Count of origin returns in [1, n], plus the late ones (time > n//2)."""
    if n < 1:
        raise ConfigurationError("need n >= 1", field="n")
    env = Environment.empty() if environment is None else environment
    env.validate_for(partition)
    lo, hi = _normalize_range(replicas, replica_range)
    dims = np.asarray(partition.dims, np.int64)
    bstart = np.asarray(partition.block_starts, np.int64)
    E = env_kernel_args(env, partition)
    if not digest:
        digest = config_digest({"kind": "returns", "partition": partition.dims,
                                "environment": env.to_json_dict(), "n": n,
                                "replicas": replicas, "seed": seed})
    parts = run_chunked(
        lambda a, b: K.k_mc_returns(dims, bstart, partition.d, E, n, _cap_for(n),
                                    st.as_u64(seed), st.TAG_RETURNS, grid_index, a, b),
        lo, hi, workers)
    _check_status(parts)
    tot = np.concatenate([p[0] for p in parts])
    late = np.concatenate([p[1] for p in parts])
    return _returns_summary(tot, late, n, seed, digest)


@dataclass(frozen=True)
class ShapeRatioResult:
    n: int
    replicas: int
    h_zero_replicas: int
    sum_ratio: Fraction
    sum_ratio_sq: Fraction
    ratio_estimate: Estimate


def estimate_shape_ratio(n: int, replicas: int, seed: int, *,
                         partition: Partition | None = None,
                         environment: Environment | None = None,
                         grid_index: int = 0, workers: int = 1,
                         replica_range=None, digest: str = "") -> ShapeRatioResult:
    """E[W_n / H_n] for the (1,1) walk: x-extent over y-extent of the range box.

    Replicas whose y-extent is still zero (possible only at tiny n) are
    excluded from the ratio and counted separately.
    """
    partition = Partition((1, 1)) if partition is None else partition
    if partition.dims != (1, 1):
        raise ConfigurationError("shape ratio is defined for the (1,1) walk",
                                 field="partition")
    env = Environment.empty() if environment is None else environment
    env.validate_for(partition)
    lo, hi = _normalize_range(replicas, replica_range)
    dims = np.asarray(partition.dims, np.int64)
    bstart = np.asarray(partition.block_starts, np.int64)
    E = env_kernel_args(env, partition)
    if not digest:
        digest = config_digest({"kind": "shape", "partition": partition.dims,
                                "environment": env.to_json_dict(), "n": n,
                                "replicas": replicas, "seed": seed})
    parts = run_chunked(
        lambda a, b: K.k_mc_widths(dims, bstart, partition.d, E, n, _cap_for(n),
                                   st.as_u64(seed), st.TAG_SHAPE, grid_index, a, b),
        lo, hi, workers)
    _check_status(parts)
    widths = np.concatenate([p[0] for p in parts])
    sum_ratio = Fraction(0)
    sum_ratio_sq = Fraction(0)
    h_zero = 0
    for i in range(widths.shape[0]):
        w, h = int(widths[i, 0]), int(widths[i, 1])
        if h == 0:
            h_zero += 1
        else:
            q = Fraction(w, h)
            sum_ratio += q
            sum_ratio_sq += q * q
    eff = (hi - lo) - h_zero
    if eff > 0:
        est = mean_estimate(sum_ratio, sum_ratio_sq, eff, seed, digest)
    else:
        est = Estimate(math.nan, math.nan, math.nan, math.nan, 0, seed, digest)
    return ShapeRatioResult(n, hi - lo, h_zero, sum_ratio, sum_ratio_sq, est)


@dataclass(frozen=True)
class StrategyScore:
    strategy: str
    d: int
    n: int
    replicas: int
    sum_range: int
    sum_range_sq: int
    mean_estimate: Estimate
    mean_over_n: float


def evaluate_strategy(strategy: Strategy, d: int, n: int, replicas: int, seed: int,
                      *, grid_index: int = 0, workers: int = 1,
                      replica_range=None, digest: str = "") -> StrategyScore:
    """Mean range size under a coordinate-choosing rule (controlled dynamics)."""
    if not 1 <= d <= 8:
        raise ConfigurationError("dimension must be in 1..8", field="d")
    lo, hi = _normalize_range(replicas, replica_range)
    part = Partition((d,))
    E = env_kernel_args(Environment.empty(), part)
    if not digest:
        digest = config_digest({"kind": "strategy", "strategy": strategy.name, "d": d,
                                "n": n, "replicas": replicas, "seed": seed})
    code = getattr(strategy, "kernel_code", None)
    if code is not None:
        parts = run_chunked(
            lambda a, b: K.k_mc_controlled(d, E, code, getattr(strategy, "kernel_param", 0),
                                           n, _cap_for(n), st.as_u64(seed), st.TAG_STRATEGY,
                                           grid_index, a, b),
            lo, hi, workers)
        _check_status(parts)
        ranges = np.concatenate([p[0] for p in parts])
    else:
        # generic Python rule: stepped one decision at a time
        vals = np.empty(hi - lo, np.int64)
        for i in range(lo, hi):
            state = WalkState(part, Environment.empty(),
                              st.derive_key(st.as_u64(seed), st.TAG_STRATEGY, grid_index, i))
            strategy.reset(Stream.derived(st.as_u64(seed), st.TAG_STRATEGY_RNG, grid_index, i))
            view = WalkView(state)
            for _ in range(n):
                axis = strategy.choose(view)
                state.step_controlled(_Fixed(axis))
            vals[i - lo] = state.range_size
        ranges = vals
    s, s2 = int(ranges.sum()), sum(int(r) ** 2 for r in ranges)
    est = mean_estimate(s, s2, hi - lo, seed, digest)
    return StrategyScore(strategy.name, d, n, hi - lo, s, s2, est,
                         est.point / n if n > 0 else math.nan)


class _Fixed:
    """Adapter so step_controlled applies an externally chosen axis."""

    def __init__(self, axis: int):
        self._axis = axis

    def choose(self, view) -> int:
        return self._axis


def rank_strategies(strategies: Sequence[Strategy], d: int, n: int, replicas: int,
                    seed: int, *, workers: int = 1) -> list[StrategyScore]:
    scores = [evaluate_strategy(s, d, n, replicas, seed, grid_index=g, workers=workers)
              for g, s in enumerate(strategies)]
    return sorted(scores, key=lambda sc: sc.mean_estimate.point, reverse=True)


@dataclass(frozen=True)
class ScalingFit:
    """One-parameter fit of p_n = C (ln ln n / ln n)^2 over a grid."""

    grid: tuple[tuple[int, float], ...]
    constant: float
    rel_residual: float
    good: bool


def fit_scaling(grid: Sequence[tuple[int, object]]) -> ScalingFit:
    """Least-squares constant through the (ln ln n / ln n)^2 decay model."""
    pts = []
    for n, est in grid:
        y = est.point if isinstance(est, Estimate) else float(est)
        pts.append((int(n), y))
    ns = [n for n, _ in pts]
    if len(pts) < 3:
        raise ConfigurationError("need at least 3 grid points", field="grid")
    if len(set(ns)) != len(ns):
        raise ConfigurationError("grid n values must be distinct", field="grid")
    if min(ns) < 16:
        raise ConfigurationError("grid n values must be >= 16", field="grid")
    x = np.array([(math.log(math.log(n)) / math.log(n)) ** 2 for n, _ in pts])
    y = np.array([p for _, p in pts])
    sxx = float(x @ x)
    c = float(x @ y) / sxx
    resid = y - c * x
    ynorm = float(np.linalg.norm(y))
    rel = float(np.linalg.norm(resid)) / ynorm if ynorm > 0 else math.inf
    return ScalingFit(tuple(pts), c, rel, bool(c > 0 and rel <= 0.2))


@dataclass(frozen=True)
class DecompositionTestResult:
    n: int
    replicas: int
    statistic: float
    dof: int
    p_value: float
    cells: int
    inverted: bool
    counts_direct: tuple[int, ...] = field(default=(), repr=False)
    counts_recon: tuple[int, ...] = field(default=(), repr=False)


def _cell_ids(positions: np.ndarray, n: int, shells: int) -> np.ndarray:
    d = positions.shape[1]
    signs = np.sign(positions) + 1  # 0, 1, 2
    pattern = np.zeros(len(positions), np.int64)
    for j in range(d):
        pattern = pattern * 3 + signs[:, j]
    radius = np.sqrt((positions.astype(np.float64) ** 2).sum(axis=1))
    shell = np.minimum((2.0 * radius / math.sqrt(max(n, 1))).astype(np.int64),
                       shells - 1)
    return pattern * shells + shell


def chi_square_from_cell_counts(counts_a, counts_b) -> tuple[float, int, float, int]:
    """Two-sample chi-square over raw cell counts; cells whose combined count
    is below 10 are pooled into one bucket.  Returns (stat, dof, p, cells)."""
    ca = np.asarray(counts_a, np.int64)
    cb = np.asarray(counts_b, np.int64)
    both = ca + cb
    keep = both >= 10
    a_k = ca[keep].astype(np.float64)
    b_k = cb[keep].astype(np.float64)
    rest_a, rest_b = float(ca[~keep].sum()), float(cb[~keep].sum())
    if rest_a + rest_b > 0:
        a_k = np.append(a_k, rest_a)
        b_k = np.append(b_k, rest_b)
    na, nb = a_k.sum(), b_k.sum()
    k1 = math.sqrt(nb / na)
    k2 = math.sqrt(na / nb)
    stat = float(((k1 * a_k - k2 * b_k) ** 2 / (a_k + b_k)).sum())
    dof = len(a_k) - 1
    return stat, dof, float(_chi2.sf(stat, dof)), len(a_k)


def decomposition_consistency_test(partition: Partition, n: int, replicas: int,
                                   seed: int, *, invert_reconstruction: bool = False,
                                   shells: int = 4, workers: int = 1,
                                   replica_range=None,
                                   digest: str = "") -> DecompositionTestResult:
    """Two-sample chi-square between direct dynamics and the two-walk
    reconstruction (independent streams consumed by freshness), on a
    coarsened state space: sign pattern x radial shell.

    ``invert_reconstruction`` feeds the first walk on revisits instead of
    fresh departures; it exists as a deliberate negative control.
    """
    if partition.m != 2:
        raise ConfigurationError("decomposition test needs exactly two blocks",
                                 field="partition")
    lo, hi = _normalize_range(replicas, replica_range)
    dims = np.asarray(partition.dims, np.int64)
    bstart = np.asarray(partition.block_starts, np.int64)
    d = partition.d
    E = env_kernel_args(Environment.empty(), partition)
    cap0 = _cap_for(n)
    if not digest:
        digest = config_digest({"kind": "decomposition-test", "partition": partition.dims,
                                "n": n, "replicas": replicas, "seed": seed,
                                "inverted": invert_reconstruction})
    parts_a = run_chunked(
        lambda a, b: K.k_mc_final(dims, bstart, d, E, n, cap0,
                                  st.as_u64(seed), st.TAG_DECOMP_DIRECT, 0, a, b),
        lo, hi, workers)
    _check_status(parts_a)
    parts_b = run_chunked(
        lambda a, b: K.k_mc_recon(int(partition.dims[0]), int(partition.dims[1]), n,
                                  cap0, st.as_u64(seed), st.TAG_DECOMP_RECON, 0, a, b,
                                  1 if invert_reconstruction else 0),
        lo, hi, workers)
    _check_status(parts_b)
    pa = np.concatenate([p[0] for p in parts_a])
    pb = np.concatenate([p[0] for p in parts_b])
    ncells = (3 ** d) * shells
    ca = np.bincount(_cell_ids(pa, n, shells), minlength=ncells)
    cb = np.bincount(_cell_ids(pb, n, shells), minlength=ncells)
    stat, dof, p, cells = chi_square_from_cell_counts(ca, cb)
    return DecompositionTestResult(n, hi - lo, stat, dof, p, cells,
                                   invert_reconstruction,
                                   tuple(int(c) for c in ca),
                                   tuple(int(c) for c in cb))


def mc_final_positions(partition: Partition, environment: Environment | None,
                       n: int, replicas: int, seed: int, *, grid_index: int = 0,
                       workers: int = 1, replica_range=None) -> np.ndarray:
    """Positions of S_n over replicas (the raw material for law comparisons)."""
    env = Environment.empty() if environment is None else environment
    env.validate_for(partition)
    lo, hi = _normalize_range(replicas, replica_range)
    dims = np.asarray(partition.dims, np.int64)
    bstart = np.asarray(partition.block_starts, np.int64)
    E = env_kernel_args(env, partition)
    parts = run_chunked(
        lambda a, b: K.k_mc_final(dims, bstart, partition.d, E, n, _cap_for(n),
                                  st.as_u64(seed), st.TAG_FINAL_POSITIONS, grid_index, a, b),
        lo, hi, workers)
    _check_status(parts)
    return np.concatenate([p[0] for p in parts])


def mc_two_law_positions(mu1, mu2, n: int, replicas: int, seed: int, *,
                         environment: Environment | None = None,
                         grid_index: int = 0, workers: int = 1) -> np.ndarray:
    """Positions of S_n under the two-law dynamics (law 1 fresh, law 2 revisit)."""
    d = mu1.dimension
    if mu2.dimension != d:
        raise ConfigurationError("laws must share a dimension", field="step_law")
    part = Partition((d,))
    env = Environment.empty() if environment is None else environment
    E = env_kernel_args(env, part)
    offs1, cum1, den1 = mu1.sampling_tables()
    offs2, cum2, den2 = mu2.sampling_tables()
    lo, hi = _normalize_range(replicas, None)
    parts = run_chunked(
        lambda a, b: K.k_mc_two_law_final(d, E, offs1, cum1, den1, offs2, cum2, den2,
                                          n, _cap_for(n), st.as_u64(seed), st.TAG_LAW_SAMPLES,
                                          grid_index, a, b),
        lo, hi, workers)
    _check_status(parts)
    return np.concatenate([p[0] for p in parts])
