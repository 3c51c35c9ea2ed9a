"""Lattice-side domain types: coordinate partitions, step laws, environments.

A ``Partition`` splits the d coordinates of Z^d into ordered blocks
(d_1, ..., d_m); the walk moves the block selected by the visit count of the
site it currently occupies (block i on the i-th visit, block m afterwards).
Sites are plain tuples of ints.  An ``Environment`` marks sites as already
visited before the walk starts, which shifts the block-selection rule but
never counts toward the walk's own range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import ConfigurationError

Site = tuple[int, ...]

MAX_DIMENSION = 8
# Coordinates live in the symmetric signed-32-bit range.  The engine packs
# coordinate pairs into biased 64-bit words whose zero value marks an empty
# hash slot; excluding -2^31 keeps that marker unambiguous.
COORD_LIMIT = 2**31 - 1


@dataclass(frozen=True)
class Partition:
    """Ordered block sizes (d_1, ..., d_m) of the coordinate axes."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(x) for x in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) < 1:
            raise ConfigurationError("needs at least one block", field="partition")
        if any(x < 1 for x in dims):
            raise ConfigurationError("every block size must be >= 1", field="partition")
        if sum(dims) > MAX_DIMENSION:
            raise ConfigurationError(
                f"total dimension {sum(dims)} exceeds {MAX_DIMENSION}", field="partition"
            )

    @property
    def d(self) -> int:
        return sum(self.dims)

    @property
    def m(self) -> int:
        return len(self.dims)

    @property
    def block_starts(self) -> tuple[int, ...]:
        starts = []
        acc = 0
        for x in self.dims:
            starts.append(acc)
            acc += x
        return tuple(starts)

    def block_of_axis(self, axis: int) -> int:
        """1-based block index owning a 0-based axis."""
        if not 0 <= axis < self.d:
            raise ConfigurationError(f"axis {axis} out of range", field="partition")
        acc = 0
        for i, x in enumerate(self.dims):
            acc += x
            if axis < acc:
                return i + 1
        raise AssertionError

    @classmethod
    def parse(cls, text: str) -> "Partition":
        try:
            dims = tuple(int(p) for p in str(text).replace(" ", "").split(",") if p)
        except ValueError as exc:
            raise ConfigurationError(f"cannot parse {text!r}", field="partition") from exc
        return cls(dims)

    def __str__(self) -> str:
        return ",".join(str(x) for x in self.dims)


def origin(d: int) -> Site:
    return (0,) * d


def as_site(coords: Sequence[int], d: int | None = None) -> Site:
    site = tuple(int(c) for c in coords)
    if d is not None and len(site) != d:
        raise ConfigurationError(f"site {site} has dimension {len(site)}, expected {d}")
    if any(abs(c) > COORD_LIMIT for c in site):
        raise ConfigurationError(f"site {site} outside the signed 32-bit coordinate range")
    return site


def _neg(site: Site) -> Site:
    return tuple(-c for c in site)


@dataclass(frozen=True)
class StepLaw:
    """Finite symmetric jump law: offsets with positive rational weights summing to 1."""

    offsets: tuple[Site, ...]
    weights: tuple[Fraction, ...]

    def __post_init__(self):
        offs = tuple(as_site(o) for o in self.offsets)
        wts = tuple(Fraction(w) for w in self.weights)
        object.__setattr__(self, "offsets", offs)
        object.__setattr__(self, "weights", wts)
        if len(offs) == 0:
            raise ConfigurationError("empty support", field="step_law")
        d = len(offs[0])
        if any(len(o) != d for o in offs):
            raise ConfigurationError("offsets of mixed dimension", field="step_law")
        if len(set(offs)) != len(offs):
            raise ConfigurationError("duplicate offsets in support", field="step_law")
        if any(w <= 0 for w in wts):
            raise ConfigurationError("weights must be positive", field="step_law")
        if sum(wts) != 1:
            raise ConfigurationError("weights must sum to exactly 1", field="step_law")
        table = dict(zip(offs, wts))
        for o, w in table.items():
            if table.get(_neg(o)) != w:
                raise ConfigurationError(
                    f"law is not symmetric at offset {o}", field="step_law"
                )

    @property
    def dimension(self) -> int:
        return len(self.offsets[0])

    @classmethod
    def uniform(cls, offsets: Iterable[Sequence[int]]) -> "StepLaw":
        offs = tuple(tuple(int(c) for c in o) for o in offsets)
        w = Fraction(1, len(offs))
        return cls(offs, tuple(w for _ in offs))

    @classmethod
    def nearest_neighbor(cls, d: int, axes: Sequence[int] | None = None) -> "StepLaw":
        """Uniform law on the signed unit vectors of the given axes (default: all)."""
        axes = list(range(d)) if axes is None else list(axes)
        offs = []
        for j in axes:
            e = [0] * d
            e[j] = 1
            offs.append(tuple(e))
            e2 = [0] * d
            e2[j] = -1
            offs.append(tuple(e2))
        return cls.uniform(offs)

    def generates_full_lattice(self) -> bool:
        """Whether the support spans all of Z^d (reported, never enforced)."""
        rows = [list(o) for o in self.offsets if any(o)]
        d = self.dimension
        # integer row elimination to upper-triangular form
        mat = [r[:] for r in rows]
        det = 1
        for col in range(d):
            pivot = None
            for i in range(col, len(mat)):
                if mat[i][col] != 0:
                    pivot = i
                    break
            if pivot is None:
                return False
            mat[col], mat[pivot] = mat[pivot], mat[col]
            for i in range(col + 1, len(mat)):
                while mat[i][col] != 0:
                    q = mat[col][col] // mat[i][col]
                    for j in range(col, d):
                        mat[col][j] -= q * mat[i][j]
                    mat[col], mat[i] = mat[i], mat[col]
            det *= mat[col][col]
        return abs(det) == 1

    def sampling_tables(self):
        """(offsets int64[k,d], cumulative counts int64[k], denominator) for exact sampling."""
        import numpy as np

        den = 1
        for w in self.weights:
            den = den * w.denominator // math.gcd(den, w.denominator)
        counts = [int(w * den) for w in self.weights]
        cum = np.cumsum(np.asarray(counts, dtype=np.int64))
        offs = np.asarray(self.offsets, dtype=np.int64)
        if den > 2**62:
            raise ConfigurationError("weight denominators too large to sample", field="step_law")
        return offs, cum, int(den)


def _trumpet_member(x: int, y: int) -> bool:
    # Membership: x >= 1 and |y| < e^x.  e^22 > 2^31, so any in-range y
    # qualifies once x >= 22; below that the double comparison is exact
    # because e^x is never an integer and |y| < 2^52.
    if x < 1:
        return False
    if x >= 22:
        return True
    return float(abs(y)) < math.exp(float(x))


@dataclass(frozen=True)
class Environment:
    """Sites pre-visited before the walk starts.

    kinds: ``empty``; ``finite`` (explicit sites with pre-visit counts);
    ``line`` (all sites whose listed axes equal the given constants);
    ``trumpet`` (d=2 flare {x >= 1, |y| < e^x}).
    """

    kind: str = "empty"
    sites: tuple[tuple[Site, int], ...] = ()
    fixed: tuple[tuple[int, int], ...] = ()
    pre: int = 1

    def __post_init__(self):
        if self.kind not in ("empty", "finite", "line", "trumpet"):
            raise ConfigurationError(f"unknown kind {self.kind!r}", field="environment")
        sites = tuple((as_site(s), int(c)) for s, c in self.sites)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "fixed", tuple((int(a), int(v)) for a, v in self.fixed))
        object.__setattr__(self, "pre", int(self.pre))
        if self.kind == "finite":
            pts = [s for s, _ in sites]
            if len(set(pts)) != len(pts):
                raise ConfigurationError("duplicate sites", field="environment")
            if any(c < 1 for _, c in sites):
                raise ConfigurationError("pre-visit counts must be >= 1", field="environment")
        if self.kind == "line":
            axes = [a for a, _ in self.fixed]
            if len(axes) == 0:
                raise ConfigurationError("line environment needs fixed axes", field="environment")
            if len(set(axes)) != len(axes):
                raise ConfigurationError("repeated fixed axis", field="environment")
        if self.kind in ("line", "trumpet") and self.pre < 1:
            raise ConfigurationError("pre-visit count must be >= 1", field="environment")

    @classmethod
    def empty(cls) -> "Environment":
        return cls()

    @classmethod
    def finite(cls, table: Mapping[Sequence[int], int] | Iterable) -> "Environment":
        items = table.items() if isinstance(table, Mapping) else table
        return cls(kind="finite", sites=tuple((tuple(s), int(c)) for s, c in items))

    @classmethod
    def line(cls, fixed: Mapping[int, int], pre_count: int = 1) -> "Environment":
        return cls(kind="line", fixed=tuple(sorted(fixed.items())), pre=pre_count)

    @classmethod
    def trumpet(cls, pre_count: int = 1) -> "Environment":
        return cls(kind="trumpet", pre=pre_count)

    def validate_for(self, partition: Partition) -> None:
        d = partition.d
        if self.kind == "finite":
            for s, _ in self.sites:
                if len(s) != d:
                    raise ConfigurationError(
                        f"environment site {s} has dimension {len(s)}, walk has {d}",
                        field="environment",
                    )
        elif self.kind == "line":
            for a, _ in self.fixed:
                if not 0 <= a < d:
                    raise ConfigurationError(
                        f"fixed axis {a} out of range for dimension {d}", field="environment"
                    )
        elif self.kind == "trumpet":
            if d != 2:
                raise ConfigurationError("trumpet environment requires d = 2", field="environment")

    def pre_count_at(self, site: Sequence[int]) -> int:
        """Pre-visit count contributed at a site (0 if not in the environment)."""
        s = tuple(site)
        if self.kind == "empty":
            return 0
        if self.kind == "finite":
            for p, c in self.sites:
                if p == s:
                    return c
            return 0
        if self.kind == "line":
            for a, v in self.fixed:
                if s[a] != v:
                    return 0
            return self.pre
        return self.pre if _trumpet_member(s[0], s[1]) else 0

    def to_json_dict(self) -> dict:
        if self.kind == "empty":
            return {"kind": "empty"}
        if self.kind == "finite":
            return {"kind": "finite", "sites": [[list(s), c] for s, c in self.sites]}
        if self.kind == "line":
            return {"kind": "line", "fixed": {str(a): v for a, v in self.fixed},
                    "pre_count": self.pre}
        return {"kind": "trumpet", "pre_count": self.pre}

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "Environment":
        kind = data.get("kind", "empty")
        if kind == "empty":
            return cls.empty()
        if kind == "finite":
            return cls.finite([(tuple(s), c) for s, c in data["sites"]])
        if kind == "line":
            return cls.line({int(a): int(v) for a, v in data["fixed"].items()},
                            pre_count=int(data.get("pre_count", 1)))
        if kind == "trumpet":
            return cls.trumpet(pre_count=int(data.get("pre_count", 1)))
        raise ConfigurationError(f"unknown kind {kind!r}", field="environment")
