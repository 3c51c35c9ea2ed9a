"""Single-replica walk state and step engine.

The process lives on Z^d with the axes split into ordered blocks
(d_1, ..., d_m).  A step from a site whose total visit count is k moves one
uniformly chosen signed unit vector inside block min(k, m).  Departures from
fresh sites (total count 1) are what drive the first block; environments
pre-load visit counts and therefore shift the rule, but never count toward
the walk's own range.

A WalkState is confined to one execution context at a time; replicas are the
unit of parallelism.  Identical (partition, environment, seed) inputs give
bit-identical trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import _kernels as K
from .errors import ConfigurationError, CoordinateOverflowError
from .lattice import Environment, Partition, Site, StepLaw, as_site
from .streams import Stream, TAG_WALK, derive_key

_ENV_CODE = {"empty": K.ENV_EMPTY, "finite": K.ENV_FINITE,
             "line": K.ENV_LINE, "trumpet": K.ENV_TRUMPET}


def component_for_visit(visit_count: int, partition: Partition) -> int:
    """Block (1-based) that moves when stepping from a site visited visit_count times."""
    if visit_count < 1:
        raise ValueError("a site being stepped from has been arrived at; count must be >= 1")
    return min(visit_count, partition.m)


def _next_pow2(x: int) -> int:
    c = 1
    while c < x:
        c *= 2
    return c


def env_kernel_args(environment: Environment, partition: Partition):
    """Environment tuple in the layout the kernels expect."""
    d = partition.d
    W = (d + 1) // 2
    evals = np.zeros(d, np.int64)
    emask = np.zeros(d, np.int64)
    etab = np.zeros((1, W + 1), np.int64)
    pre = 0
    kind = _ENV_CODE[environment.kind]
    if environment.kind == "finite":
        if not environment.sites:
            kind = K.ENV_EMPTY
        else:
            sites = np.asarray([s for s, _ in environment.sites], dtype=np.int64)
            counts = np.asarray([c for _, c in environment.sites], dtype=np.int64)
            cap = _next_pow2(max(8, 2 * len(counts)))
            etab = K.k_build_table(sites, counts, d, cap)
    elif environment.kind == "line":
        for a, v in environment.fixed:
            emask[a] = 1
            evals[a] = v
        pre = environment.pre
    elif environment.kind == "trumpet":
        pre = environment.pre
    return (np.int64(kind), evals, emask, np.int64(pre), etab)


@dataclass
class RunSummary:
    """Final state plus whatever recordings the caller asked for."""

    state: "WalkState"
    trajectory: np.ndarray | None = None
    window: tuple[int, int] | None = None
    fresh_times: np.ndarray | None = None
    return_times: np.ndarray | None = None


class WalkState:
    """Position, clock, visit table, and derived statistics of one replica."""

    def __init__(self, partition: Partition, environment: Environment, seed: int,
                 _table_capacity: int = 256):
        environment.validate_for(partition)
        self.partition = partition
        self.environment = environment
        self.seed = int(seed)
        self._d = partition.d
        self._dims = np.asarray(partition.dims, dtype=np.int64)
        self._bstart = np.asarray(partition.block_starts, dtype=np.int64)
        self._env = env_kernel_args(environment, partition)
        self._rng = Stream.derived(self.seed, TAG_WALK)
        self._pos, self._tab, self._scal, self._bbox = K.k_init(
            self._d, _table_capacity, self._env)

    # -- read-only accessors --------------------------------------------

    @property
    def position(self) -> Site:
        return tuple(int(c) for c in self._pos)

    @property
    def time(self) -> int:
        return int(self._scal[0])

    @property
    def range_size(self) -> int:
        return int(self._scal[2])

    @property
    def fresh_steps(self) -> int:
        return int(self._scal[3])

    def walk_visit_count(self, site: Sequence[int]) -> int:
        """Arrivals of the walk itself at a site (environment excluded)."""
        s = np.asarray(as_site(site, self._d), dtype=np.int64)
        return int(K.k_lookup(self._tab, s, self._d))

    def visit_count(self, site: Sequence[int]) -> int:
        """Total visit count: walk arrivals plus environment pre-visits."""
        return self.walk_visit_count(site) + self.environment.pre_count_at(tuple(site))

    @property
    def visits(self) -> Mapping[Site, int]:
        """Walk-arrival counts as a dict (materializes the whole table)."""
        sites, counts = K.k_dump_table(self._tab, self._d)
        return {tuple(int(c) for c in sites[i]): int(counts[i])
                for i in range(len(counts))}

    def bounding_box(self) -> tuple[tuple[int, int], ...]:
        """Per-axis (min, max) extents of walk-visited sites."""
        return tuple((int(self._bbox[0, j]), int(self._bbox[1, j]))
                     for j in range(self._d))

    def clone(self) -> "WalkState":
        other = object.__new__(WalkState)
        other.partition = self.partition
        other.environment = self.environment
        other.seed = self.seed
        other._d = self._d
        other._dims = self._dims
        other._bstart = self._bstart
        other._env = self._env
        other._rng = self._rng.clone()
        other._pos = self._pos.copy()
        other._tab = self._tab.copy()
        other._scal = self._scal.copy()
        other._bbox = self._bbox.copy()
        return other

    # -- stepping ---------------------------------------------------------

    def _check_status(self):
        if self._scal[4] != 0:
            raise CoordinateOverflowError(
                f"coordinate left the signed 32-bit range at time {self.time}")

    def _reserve(self, nsteps: int):
        need = (int(self._scal[1]) + nsteps + 2) * 3 // 2
        while self._tab.shape[0] < need:
            self._tab = K._rehash(self._tab, (self._d + 1) // 2)

    def step(self) -> "WalkState":
        """Advance one step of the visit-staged dynamics."""
        self.run(1)
        return self

    def run(self, nsteps: int, window: tuple[int, int] | None = None,
            record_fresh: bool = False, record_returns: bool = False) -> RunSummary:
        """Advance nsteps; optionally record S_t over a time window, the times
        of fresh-site departures, and the times of origin returns."""
        if nsteps < 0:
            raise ConfigurationError("step count must be >= 0")
        if window is not None:
            a, b = int(window[0]), int(window[1])
            if a < 0 or b < a:
                raise ConfigurationError(f"bad trajectory window [{a}, {b}]")
            traj = np.zeros((b - a + 1, self._d), np.int64)
        else:
            a, b = 0, -1
            traj = np.zeros((0, self._d), np.int64)
        self._reserve(nsteps)
        self._tab, fresh_buf, nf, ret_buf, nr = K.k_run_block(
            self._pos, self._tab, self._scal, self._bbox, self._rng.state,
            self._dims, self._bstart, self._d, self._env, nsteps,
            a, b, traj, record_fresh, record_returns)
        self._check_status()
        return RunSummary(
            state=self,
            trajectory=traj if window is not None else None,
            window=window,
            fresh_times=fresh_buf[:nf].copy() if record_fresh else None,
            return_times=ret_buf[:nr].copy() if record_returns else None,
        )

    def step_general(self, mu1: StepLaw, mu2: StepLaw) -> "WalkState":
        """One step drawing from mu1 at fresh sites and mu2 at revisited ones."""
        self.run_general(1, mu1, mu2)
        return self

    def run_general(self, nsteps: int, mu1: StepLaw, mu2: StepLaw) -> "WalkState":
        if mu1.dimension != self._d or mu2.dimension != self._d:
            raise ConfigurationError(
                f"step laws must have dimension {self._d}", field="step_law")
        offs1, cum1, den1 = mu1.sampling_tables()
        offs2, cum2, den2 = mu2.sampling_tables()
        self._reserve(nsteps)
        self._tab = K.k_run_two_law(
            self._pos, self._tab, self._scal, self._bbox, self._rng.state,
            self._d, self._env, offs1, cum1, den1, offs2, cum2, den2, nsteps)
        self._check_status()
        return self

    def step_controlled(self, strategy) -> "WalkState":
        """One step along the coordinate the strategy picks (sign is fair)."""
        axis = strategy.choose(WalkView(self))
        if not 1 <= axis <= self._d:
            raise ConfigurationError(
                f"strategy returned coordinate {axis}, valid range is 1..{self._d}")
        self._reserve(1)
        self._tab = K.k_step_forced(
            self._pos, self._tab, self._scal, self._bbox, self._rng.state,
            self._d, self._env, axis - 1)
        self._check_status()
        return self

    def run_controlled(self, nsteps: int, strategy) -> "WalkState":
        code = getattr(strategy, "kernel_code", None)
        if code is not None:
            self._reserve(nsteps)
            self._tab = K.k_run_controlled(
                self._pos, self._tab, self._scal, self._bbox, self._rng.state,
                self._d, self._env, code, getattr(strategy, "kernel_param", 0), nsteps)
            self._check_status()
        else:
            for _ in range(nsteps):
                self.step_controlled(strategy)
        return self


class WalkView:
    """Read-only view handed to strategies; never mutate through it."""

    __slots__ = ("_s",)

    def __init__(self, state: WalkState):
        self._s = state

    @property
    def position(self) -> Site:
        return self._s.position

    @property
    def time(self) -> int:
        return self._s.time

    @property
    def range_size(self) -> int:
        return self._s.range_size

    @property
    def fresh_steps(self) -> int:
        return self._s.fresh_steps

    @property
    def d(self) -> int:
        return self._s.partition.d

    @property
    def partition(self) -> Partition:
        return self._s.partition

    def visit_count(self, site: Sequence[int]) -> int:
        return self._s.visit_count(site)

    def bounding_box(self):
        return self._s.bounding_box()


def new_walk(partition: Partition, environment: Environment | None = None,
             seed: int = 0) -> WalkState:
    """Fresh walk at the origin; time 0 counts as the origin's first arrival."""
    env = Environment.empty() if environment is None else environment
    return WalkState(partition, env, seed)


def derive_walk_seed(master: int, replica: int) -> int:
    """Seed for replica i of a manually fanned-out batch."""
    return derive_key(master, TAG_WALK, replica)
