"""Seeded random streams for reproducible replica-parallel simulation.

Every replica draws from its own xoshiro256++ stream whose 256-bit state is
expanded (splitmix64-style) from a 64-bit key.  Keys are derived by folding
words into a master seed: replica i of grid point g of experiment kind k uses
``derive_key(master, k, g, i)``.  Derivation is pure integer mixing, so
results never depend on scheduling or worker count.
"""

from __future__ import annotations

import numpy as np
from numba import njit

U64 = np.uint64

_GAMMA = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)

_MASK64 = 0xFFFFFFFFFFFFFFFF

# Domain tags keeping streams of different experiment kinds disjoint.
TAG_WALK = 1
TAG_RETURN_WINDOW = 2
TAG_RANGE_STATS = 3
TAG_RETURNS = 4
TAG_SHAPE = 5
TAG_STRATEGY = 6
TAG_LAW_SAMPLES = 7
TAG_DECOMP_DIRECT = 8
TAG_DECOMP_RECON = 9
TAG_FINAL_POSITIONS = 10
TAG_SRW_TRAJ = 11
TAG_SRW_RETURNS = 12
TAG_SRW_WINDOW = 13
TAG_SRW_NSTAR = 14
TAG_SRW_RANGE = 15
TAG_SRW_HIT = 16
TAG_SRW_TAU = 17
TAG_STRATEGY_RNG = 18


@njit(cache=True, nogil=True, inline="always")
def mix64(z):
    """splitmix64 finalizer on a uint64."""
    z = (z ^ (z >> U64(30))) * _MIX1
    z = (z ^ (z >> U64(27))) * _MIX2
    return z ^ (z >> U64(31))


@njit(cache=True, nogil=True, inline="always")
def fold(h, w):
    """Fold word w into key h (order-sensitive, non-commutative)."""
    return mix64((h ^ mix64(w + _GAMMA)) + _GAMMA)


@njit(cache=True, nogil=True, inline="always")
def stream_init(key, state):
    """Expand a 64-bit key into a xoshiro256++ state (4 splitmix64 draws)."""
    z = key
    for i in range(4):
        z = z + _GAMMA
        state[i] = mix64(z)


@njit(cache=True, nogil=True, inline="always")
def stream_from(master, a, b, c, state):
    key = fold(fold(fold(U64(master), U64(a)), U64(b)), U64(c))
    stream_init(key, state)


@njit(cache=True, nogil=True, inline="always")
def next_u64(s):
    """xoshiro256++ step; mutates the 4-word state s."""
    s0 = s[0]
    x = s0 + s[3]
    res = ((x << U64(23)) | (x >> U64(41))) + s0
    t = s[1] << U64(17)
    s[2] ^= s0
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    r3 = s[3]
    s[3] = (r3 << U64(45)) | (r3 >> U64(19))
    return res


@njit(cache=True, nogil=True, inline="always")
def next_below(s, k):
    """Uniform int64 in [0, k) by masked rejection; exact for any k >= 1."""
    if k <= 1:
        return np.int64(0)
    m = U64(k - 1)
    m |= m >> U64(1)
    m |= m >> U64(2)
    m |= m >> U64(4)
    m |= m >> U64(8)
    m |= m >> U64(16)
    m |= m >> U64(32)
    while True:
        r = next_u64(s) & m
        if r < U64(k):
            return np.int64(r)


@njit(cache=True, nogil=True, inline="always")
def next_double(s):
    """Uniform double in [0, 1) with 53 random bits."""
    return (next_u64(s) >> U64(11)) * (1.0 / 9007199254740992.0)


# -- pure-Python mirrors (used by tests to pin the stream definition) --------

def as_u64(value: int) -> np.uint64:
    """Clamp any Python int onto the uint64 wheel for kernel arguments."""
    return np.uint64(int(value) & _MASK64)


def py_mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def py_fold(h: int, w: int) -> int:
    g = 0x9E3779B97F4A7C15
    return py_mix64(((h ^ py_mix64((w + g) & _MASK64)) + g) & _MASK64)


def derive_key(master: int, *words: int) -> int:
    """64-bit stream key from a master seed and a path of words."""
    h = int(master) & _MASK64
    for w in words:
        h = py_fold(h, int(w) & _MASK64)
    return h


class Stream:
    """Host-side view of one xoshiro256++ stream.

    The state array is shared with the jitted kernels, so a walk advanced in
    Python and one advanced inside a kernel consume the same sequence.
    """

    __slots__ = ("state",)

    def __init__(self, key: int):
        self.state = np.empty(4, dtype=np.uint64)
        stream_init(U64(key & _MASK64), self.state)

    @classmethod
    def derived(cls, master: int, *words: int) -> "Stream":
        return cls(derive_key(master, *words))

    def u64(self) -> int:
        return int(next_u64(self.state))

    def below(self, k: int) -> int:
        return int(next_below(self.state, k))

    def double(self) -> float:
        return float(next_double(self.state))

    def clone(self) -> "Stream":
        s = object.__new__(Stream)
        s.state = self.state.copy()
        return s
