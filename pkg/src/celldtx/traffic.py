"""Delay-constrained downlink traffic (FTP model 3 style Poisson arrivals).

Each UE draws a fixed packet size, mean inter-arrival time and delay
requirement once; packets then arrive as a Poisson process floored onto the
1 ms TTI grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

PACKET_SIZES = tuple(range(125, 501, 25))
MEAN_INTERARRIVALS = (10, 15, 20)
DELAY_REQUIREMENTS = (50, 75, 100)


@dataclass(frozen=True)
class UeProfile:
    packet_size: int
    mean_interarrival: float
    delay_req: int

    @property
    def offered_load(self) -> float:
        """Mean offered load in bytes per ms."""
        return self.packet_size / self.mean_interarrival


@dataclass
class Trace:
    """Column-oriented packet list, sorted by (arrival, ue, id).

    ``status`` and ``delivered_at`` are outcome columns filled in by the
    simulator; a fresh trace has every packet pending.
    """

    ids: np.ndarray
    ue: np.ndarray
    arrival: np.ndarray
    size: np.ndarray
    deadline: np.ndarray

    def __post_init__(self):
        n = len(self.ids)
        for col in (self.ue, self.arrival, self.size, self.deadline):
            if len(col) != n:
                raise ValueError("trace columns must have equal length")

    def __len__(self):
        return len(self.ids)

    @property
    def total_bytes(self) -> int:
        return int(self.size.sum())

    def window(self, t0: int, t1: int, shift: bool = True) -> "Trace":
        """Packets arriving in [t0, t1), optionally re-based so t0 -> 0."""
        sel = (self.arrival >= t0) & (self.arrival < t1)
        off = t0 if shift else 0
        return Trace(
            self.ids[sel],
            self.ue[sel],
            self.arrival[sel] - off,
            self.size[sel],
            self.deadline[sel] - off,
        )

    def write(self, fh: TextIO) -> None:
        fh.write("# packet_id ue_id arrival_ms size_bytes deadline_ms\n")
        for row in zip(self.ids, self.ue, self.arrival, self.size, self.deadline):
            fh.write(" ".join(str(int(v)) for v in row) + "\n")

    @classmethod
    def read(cls, fh: TextIO) -> "Trace":
        rows = [
            [int(v) for v in line.split()]
            for line in fh
            if line.strip() and not line.startswith("#")
        ]
        if not rows:
            return empty_trace()
        arr = np.asarray(rows, dtype=np.int64)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4])

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, c), getattr(other, c))
            for c in ("ids", "ue", "arrival", "size", "deadline")
        )


def empty_trace() -> Trace:
    z = np.zeros(0, dtype=np.int64)
    return Trace(z, z.copy(), z.copy(), z.copy(), z.copy())


def sample_ue_profiles(
    rng: np.random.Generator,
    n_ues: int,
    packet_sizes: Sequence[int] = PACKET_SIZES,
    interarrivals: Sequence[float] = MEAN_INTERARRIVALS,
    delay_reqs: Sequence[int] = DELAY_REQUIREMENTS,
) -> list[UeProfile]:
    if n_ues < 1:
        raise ValueError("n_ues must be >= 1")
    sizes = rng.choice(np.asarray(packet_sizes), size=n_ues)
    iats = rng.choice(np.asarray(interarrivals, dtype=float), size=n_ues)
    delays = rng.choice(np.asarray(delay_reqs), size=n_ues)
    return [
        UeProfile(int(s), float(m), int(d)) for s, m, d in zip(sizes, iats, delays)
    ]


def generate_arrivals(
    profile: UeProfile,
    duration: int,
    rng: np.random.Generator | None = None,
    deterministic: bool = False,
) -> np.ndarray:
    """Integer arrival times in [0, duration) for one UE.

    In deterministic mode packets arrive every ``mean_interarrival`` ms
    starting at 0 and ``rng`` is not touched.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    mean = profile.mean_interarrival
    if deterministic:
        n = int(np.floor(duration / mean))
        return np.floor(np.arange(n) * mean).astype(np.int64)
    # draw in chunks until the cumulative sum passes the window end
    expected = int(duration / mean)
    chunk = expected + 4 * int(np.sqrt(expected)) + 8
    times = np.cumsum(rng.exponential(mean, size=chunk))
    while times[-1] < duration:
        more = times[-1] + np.cumsum(rng.exponential(mean, size=chunk))
        times = np.concatenate([times, more])
    times = np.floor(times[times < duration]).astype(np.int64)
    # floored arrivals of one UE may share a TTI; push collisions forward so
    # the sequence is strictly increasing, i.e. b[i] = max(a[i], b[i-1] + 1)
    idx = np.arange(len(times))
    times = np.maximum.accumulate(times - idx) + idx
    return times[times < duration]


def build_trace(
    profiles: Sequence[UeProfile],
    duration: int,
    rng: np.random.Generator | None = None,
    deterministic: bool = False,
) -> Trace:
    """Merge per-UE arrivals into one cell-level trace sorted by arrival."""
    ues, arr, size, dl = [], [], [], []
    for u, prof in enumerate(profiles):
        a = generate_arrivals(prof, duration, rng, deterministic)
        ues.append(np.full(len(a), u, dtype=np.int64))
        arr.append(a)
        size.append(np.full(len(a), prof.packet_size, dtype=np.int64))
        dl.append(a + prof.delay_req)
    if not arr:
        return empty_trace()
    ue = np.concatenate(ues)
    arrival = np.concatenate(arr)
    sizes = np.concatenate(size)
    deadline = np.concatenate(dl)
    order = np.lexsort((ue, arrival))
    n = len(order)
    return Trace(
        np.arange(n, dtype=np.int64),
        ue[order],
        arrival[order],
        sizes[order],
        deadline[order],
    )


def offered_load(profiles: Iterable[UeProfile]) -> float:
    return float(sum(p.offered_load for p in profiles))
