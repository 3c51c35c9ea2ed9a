"""Decision rules for the controlled walk (which coordinate moves next).

A strategy maps a read-only state view to a 1-based coordinate index; the
engine then moves that coordinate by +-1 with probability 1/2 each.  The
built-ins carry a kernel code so batch runs stay inside compiled loops;
custom subclasses are stepped from Python and may inspect visit counts of
arbitrary sites.  Strategies needing randomness get their own stream via
``reset`` so the walk's stream stays untouched.
"""

from __future__ import annotations

from . import _kernels as K
from .streams import Stream


class Strategy:
    """Base class for coordinate-choosing rules."""

    kernel_code: int | None = None
    kernel_param: int = 0
    name: str = "custom"

    def reset(self, rng: Stream) -> None:
        """Called once per replica with a derived stream."""

    def choose(self, view) -> int:
        raise NotImplementedError


class AlwaysCoordinate(Strategy):
    """Move the same coordinate forever (1-based)."""

    kernel_code = K.STRAT_FIXED

    def __init__(self, coordinate: int = 1):
        self.coordinate = int(coordinate)
        self.kernel_param = self.coordinate - 1
        self.name = f"always-{self.coordinate}"

    def choose(self, view) -> int:
        return self.coordinate


class RoundRobin(Strategy):
    """Cycle through coordinates 1..d in order."""

    kernel_code = K.STRAT_ROUND_ROBIN
    name = "round-robin"

    def choose(self, view) -> int:
        return view.time % view.d + 1


class UniformCoordinate(Strategy):
    """Pick a coordinate uniformly at random (the walk is then a plain SRW)."""

    kernel_code = K.STRAT_UNIFORM
    name = "uniform-random"

    def __init__(self):
        self._rng: Stream | None = None

    def reset(self, rng: Stream) -> None:
        self._rng = rng

    def choose(self, view) -> int:
        if self._rng is None:
            raise RuntimeError("reset(rng) must be called before choose()")
        return self._rng.below(view.d) + 1


def builtin_strategies() -> dict[str, Strategy]:
    return {
        "always-first": AlwaysCoordinate(1),
        "round-robin": RoundRobin(),
        "uniform-random": UniformCoordinate(),
    }


def strategy_by_name(name: str) -> Strategy:
    table = builtin_strategies()
    if name not in table:
        from .errors import ConfigurationError

        raise ConfigurationError(
            f"unknown strategy {name!r}; built-ins: {sorted(table)}", field="strategy")
    return table[name]
