"""Cell DTX patterns and the discrete action set the agent chooses from.

All durations are integer milliseconds; one TTI is 1 ms, so fractional
on-durations and the slot offset are not representable here.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

# Integer-valued RRC cycle lengths and on-duration timers.  Only values that
# are spelled out explicitly are listed; the elided tails are not guessed.
DEFAULT_CYCLES = (10, 20, 32, 40, 60, 64, 70, 80, 128)
DEFAULT_ON_DURATIONS = (1, 2, 3, 4, 5, 6, 8, 10, 20, 30, 40, 50, 60, 80, 100)

ALWAYS_ACTIVE = (1, 1)


@dataclass(frozen=True)
class DtxConfig:
    cycle_length: int
    on_duration: int
    start_offset: int = 0

    def __post_init__(self):
        for name in ("cycle_length", "on_duration", "start_offset"):
            value = getattr(self, name)
            if not isinstance(value, numbers.Integral) or isinstance(value, bool):
                raise TypeError(f"{name} must be an integer, got {value!r}")
        if self.cycle_length < 1 or self.on_duration < 1:
            raise ValueError("cycle_length and on_duration must be positive")
        if self.on_duration > self.cycle_length:
            raise ValueError(
                f"on_duration {self.on_duration} exceeds cycle_length {self.cycle_length}"
            )
        if self.on_duration == self.cycle_length and self.cycle_length != 1:
            raise ValueError("on_duration == cycle_length is only allowed for (1, 1)")
        if not 0 <= self.start_offset < self.cycle_length:
            raise ValueError(
                f"start_offset {self.start_offset} outside [0, {self.cycle_length})"
            )

    @property
    def always_active(self) -> bool:
        return self.on_duration == self.cycle_length

    @property
    def pair(self) -> tuple[int, int]:
        return (self.cycle_length, self.on_duration)


@dataclass(frozen=True)
class ActionSpace:
    """Ordered, index-stable list of (cycle_length, on_duration) pairs."""

    actions: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(set(self.actions)) != len(self.actions):
            raise ValueError("duplicate actions")
        if self.actions.count(ALWAYS_ACTIVE) != 1:
            raise ValueError("action space must contain (1, 1) exactly once")

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, index: int) -> tuple[int, int]:
        return self.actions[index]

    def __iter__(self):
        return iter(self.actions)

    def index(self, pair: Sequence[int]) -> int:
        return self.actions.index(tuple(int(v) for v in pair))

    @property
    def always_active_index(self) -> int:
        return self.actions.index(ALWAYS_ACTIVE)

    def config(self, index: int, start_offset: int = 0) -> DtxConfig:
        cycle, on = self.actions[index]
        return DtxConfig(cycle, on, start_offset)

    def to_list(self) -> list[list[int]]:
        return [list(a) for a in self.actions]

    @classmethod
    def from_list(cls, pairs: Iterable[Sequence[int]]) -> "ActionSpace":
        return cls(tuple((int(c), int(o)) for c, o in pairs))


def _as_int_set(values, name):
    out = set()
    for v in values:
        if not isinstance(v, numbers.Integral) or isinstance(v, bool):
            raise TypeError(f"{name} must contain integers, got {v!r}")
        if v <= 0:
            raise ValueError(f"{name} must contain positive values, got {v}")
        out.add(int(v))
    if not out:
        raise ValueError(f"{name} is empty")
    return out


def enumerate_actions(
    min_deadline: int,
    cycle_set: Iterable[int] = DEFAULT_CYCLES,
    on_set: Iterable[int] = DEFAULT_ON_DURATIONS,
) -> ActionSpace:
    """All (cycle, on) with cycle < min_deadline and on < cycle, plus (1, 1).

    Sorted by cycle then on-duration with (1, 1) appended last, so indices do
    not depend on the order of the input sets.
    """
    if not isinstance(min_deadline, numbers.Integral) or isinstance(min_deadline, bool):
        raise TypeError(f"min_deadline must be an integer, got {min_deadline!r}")
    if min_deadline <= 1:
        raise ValueError("min_deadline must be > 1")
    cycles = _as_int_set(cycle_set, "cycle_set")
    ons = _as_int_set(on_set, "on_set")
    pairs = [
        (c, o)
        for c in sorted(cycles)
        if c < min_deadline
        for o in sorted(ons)
        if o < c
    ]
    pairs.append(ALWAYS_ACTIVE)
    return ActionSpace(tuple(pairs))


def active_in_tti(config: DtxConfig, t: int) -> bool:
    if t < 0:
        raise ValueError("TTI index must be non-negative")
    return (t - config.start_offset) % config.cycle_length < config.on_duration


def active_mask(config: DtxConfig, t0: int, t1: int) -> np.ndarray:
    """Vectorised ``active_in_tti`` over the TTIs of [t0, t1)."""
    t = np.arange(t0, t1)
    return (t - config.start_offset) % config.cycle_length < config.on_duration


def non_active_gaps(config: DtxConfig, t0: int, t1: int) -> list[tuple[int, int]]:
    """Maximal runs of inactive TTIs inside [t0, t1) as (start, length)."""
    if t1 <= t0:
        raise ValueError("window must be non-empty")
    if config.always_active:
        return []
    inactive = ~active_mask(config, t0, t1)
    padded = np.concatenate(([False], inactive, [False])).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return [(int(t0 + s), int(e - s)) for s, e in zip(starts, ends)]
