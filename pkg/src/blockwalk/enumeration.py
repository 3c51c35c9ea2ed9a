"""Exact small-horizon laws by exhaustive weighted path enumeration.

Ground truth for the statistical tests: every path of length n is walked
with its exact rational weight (all arithmetic over a common integer
denominator), so probabilities come out as exact fractions with no
tolerance.  Horizons are capped at branching**n <= 10^7 paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .errors import ResourceLimitError, UnsupportedError
from .lattice import Environment, Partition, Site

MAX_PATHS = 10_000_000


def _lcm_all(values) -> int:
    out = 1
    for v in values:
        out = out * v // math.gcd(out, v)
    return out


def _check_cutoff(partition: Partition, horizon: int) -> None:
    if horizon < 0:
        raise ResourceLimitError("horizon must be >= 0")
    branching = max(2 * dc for dc in partition.dims)
    if branching ** horizon > MAX_PATHS:
        raise ResourceLimitError(
            f"enumeration of {branching}^{horizon} paths exceeds the "
            f"{MAX_PATHS} path cutoff")


def _check_env(environment: Environment | None) -> Environment:
    env = Environment.empty() if environment is None else environment
    if env.kind == "trumpet":
        raise UnsupportedError(
            "exact enumeration supports empty, finite, and line environments only",
            field="environment")
    return env


@dataclass(frozen=True)
class ExactDistribution:
    """Law of the position at a fixed horizon, as exact rationals."""

    horizon: int
    entries: Mapping[Site, Fraction]

    def __post_init__(self):
        total = Fraction(0)
        for site, p in self.entries.items():
            if p <= 0:
                raise ValueError(f"non-positive probability at {site}")
            total += p
        if total != 1:
            raise ValueError(f"probabilities sum to {total}, not 1")

    @property
    def support(self):
        return set(self.entries)

    def prob(self, site) -> Fraction:
        return self.entries.get(tuple(site), Fraction(0))

    def total_variation(self, other: "ExactDistribution") -> Fraction:
        keys = set(self.entries) | set(other.entries)
        return sum((abs(self.prob(k) - other.prob(k)) for k in keys), Fraction(0)) / 2

    def tv_from_counts(self, counts: Mapping[Site, int]) -> Fraction:
        """Exact TV distance between this law and an empirical frequency table."""
        total = sum(counts.values())
        keys = set(self.entries) | set(counts)
        acc = Fraction(0)
        for k in keys:
            acc += abs(Fraction(counts.get(k, 0), total) - self.prob(k))
        return acc / 2

    def to_json_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "entries": {",".join(str(c) for c in site): f"{p.numerator}/{p.denominator}"
                        for site, p in sorted(self.entries.items())},
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "ExactDistribution":
        entries = {}
        for key, val in data["entries"].items():
            site = tuple(int(c) for c in key.split(","))
            num, den = val.split("/")
            entries[site] = Fraction(int(num), int(den))
        return cls(int(data["horizon"]), entries)


def exact_distribution(partition: Partition, n: int,
                       environment: Environment | None = None) -> ExactDistribution:
    """Exact law of the position after n steps of the visit-staged walk."""
    env = _check_env(environment)
    env.validate_for(partition)
    _check_cutoff(partition, n)
    dims = partition.dims
    m = partition.m
    starts = partition.block_starts
    scale = _lcm_all(2 * dc for dc in dims)
    factors = [scale // (2 * dc) for dc in dims]
    moves = [[(starts[b] + j, delta) for j in range(dims[b]) for delta in (1, -1)]
             for b in range(m)]
    d = partition.d
    pos = [0] * d
    visits = {tuple(pos): 1}
    acc: dict[Site, int] = {}

    def dfs(depth: int, weight: int):
        here = tuple(pos)
        if depth == n:
            acc[here] = acc.get(here, 0) + weight
            return
        tot = visits[here] + env.pre_count_at(here)
        b = min(tot, m) - 1
        w2 = weight * factors[b]
        for axis, delta in moves[b]:
            pos[axis] += delta
            key = tuple(pos)
            c = visits.get(key, 0) + 1
            visits[key] = c
            dfs(depth + 1, w2)
            if c == 1:
                del visits[key]
            else:
                visits[key] = c - 1
            pos[axis] -= delta

    dfs(0, 1)
    den = scale ** n
    return ExactDistribution(n, {site: Fraction(w, den) for site, w in acc.items()})


def exact_hit_window(partition: Partition, a: int, b: int,
                     environment: Environment | None = None) -> Fraction:
    """Exact P[origin appears among S_a..S_b] (closed window)."""
    env = _check_env(environment)
    env.validate_for(partition)
    if a < 0 or b < a:
        raise ResourceLimitError(f"bad window [{a}, {b}]")
    if a == 0:
        return Fraction(1)  # S_0 = 0 is always in the window
    _check_cutoff(partition, b)
    dims = partition.dims
    m = partition.m
    starts = partition.block_starts
    scale = _lcm_all(2 * dc for dc in dims)
    factors = [scale // (2 * dc) for dc in dims]
    moves = [[(starts[bl] + j, delta) for j in range(dims[bl]) for delta in (1, -1)]
             for bl in range(m)]
    d = partition.d
    pos = [0] * d
    visits = {tuple(pos): 1}
    hits = 0

    def dfs(depth: int, weight: int):
        nonlocal hits
        here = tuple(pos)
        if depth >= a and all(c == 0 for c in here):
            # every continuation of this path is a hit
            hits += weight * scale ** (b - depth)
            return
        if depth == b:
            return
        tot = visits[here] + env.pre_count_at(here)
        bl = min(tot, m) - 1
        w2 = weight * factors[bl]
        for axis, delta in moves[bl]:
            pos[axis] += delta
            key = tuple(pos)
            c = visits.get(key, 0) + 1
            visits[key] = c
            dfs(depth + 1, w2)
            if c == 1:
                del visits[key]
            else:
                visits[key] = c - 1
            pos[axis] -= delta

    dfs(0, 1)
    return Fraction(hits, scale ** b)


def exact_return_window(partition: Partition, n: int,
                        environment: Environment | None = None) -> Fraction:
    """Exact P[origin appears among S_n..S_2n]."""
    return exact_hit_window(partition, n, 2 * n, environment)


def exact_reconstruction_distribution(partition: Partition, n: int) -> ExactDistribution:
    """Law of the composite built from two independent nearest-neighbor walks.

    The first walk (on Z^d1) supplies the increment whenever the composite
    departs a fresh site, the second (on Z^d2) whenever it departs a
    revisited one.  Agreeing exactly with ``exact_distribution`` is the
    module's core identity check.
    """
    if partition.m != 2:
        raise UnsupportedError("reconstruction needs exactly two blocks", field="partition")
    _check_cutoff(partition, n)
    d1, d2 = partition.dims
    d = d1 + d2
    scale = _lcm_all((2 * d1, 2 * d2))
    f1 = scale // (2 * d1)
    f2 = scale // (2 * d2)
    u_pos = [0] * d1
    v_pos = [0] * d2
    visits = {tuple([0] * d): 1}
    acc: dict[Site, int] = {}
    u_moves = [(j, delta) for j in range(d1) for delta in (1, -1)]
    v_moves = [(j, delta) for j in range(d2) for delta in (1, -1)]

    def dfs(depth: int, weight: int, consumed_u: int):
        comp = tuple(u_pos) + tuple(v_pos)
        if depth == n:
            acc[comp] = acc.get(comp, 0) + weight
            return
        fresh = visits[comp] == 1
        if fresh:
            walk_pos, mvs, w2 = u_pos, u_moves, weight * f1
        else:
            walk_pos, mvs, w2 = v_pos, v_moves, weight * f2
        for axis, delta in mvs:
            walk_pos[axis] += delta
            key = tuple(u_pos) + tuple(v_pos)
            c = visits.get(key, 0) + 1
            visits[key] = c
            dfs(depth + 1, w2, consumed_u + (1 if fresh else 0))
            if c == 1:
                del visits[key]
            else:
                visits[key] = c - 1
            walk_pos[axis] -= delta

    dfs(0, 1, 0)
    den = scale ** n
    return ExactDistribution(n, {site: Fraction(w, den) for site, w in acc.items()})
