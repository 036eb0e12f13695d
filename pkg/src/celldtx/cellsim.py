"""TTI-granular single-cell downlink simulator with DTX gating and sleep modes."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from .actions import DtxConfig, active_mask, non_active_gaps
from .traffic import Trace, UeProfile

PENDING, DELIVERED, DROPPED = 0, 1, 2
STATUS_NAMES = {PENDING: "pending", DELIVERED: "delivered", DROPPED: "dropped"}

MAX_DL_POWER = 200.0


@dataclass(frozen=True)
class SleepMode:
    name: str
    power: float
    transition_time: int
    transition_energy: float

    def energy(self, gap: int) -> float:
        return self.transition_energy + (gap - self.transition_time) * self.power


SM1 = SleepMode("SM1", 50.0, 0, 0.0)
SM2 = SleepMode("SM2", 25.0, 6, 90.0)
SM3 = SleepMode("SM3", 1.0, 50, 1000.0)
# deepest first, so ties resolve toward the deeper mode
SLEEP_MODES = (SM3, SM2, SM1)

IDLE_POWER = SM1.power


def dl_power(s_f: float) -> float:
    """Relative DL power when a fraction ``s_f`` of the bandwidth is used."""
    if not 0.0 <= s_f <= 1.0:
        raise ValueError(f"bandwidth fraction {s_f} outside [0, 1]")
    return 110.0 + 90.0 * s_f


def plan_sleep(gap: int, modes: Sequence[SleepMode] = SLEEP_MODES) -> tuple[SleepMode, float]:
    """Cheapest sleep mode for an idle gap of ``gap`` ms and its energy.

    A mode is usable only if its total transition time is strictly shorter
    than the gap; a zero-transition mode is always usable.
    """
    if gap < 1:
        raise ValueError("gap must be >= 1 ms")
    best, best_energy = None, np.inf
    for mode in sorted(modes, key=lambda m: m.power):
        if mode.transition_time >= gap and mode.transition_time > 0:
            continue
        e = mode.energy(gap)
        if e < best_energy:
            best, best_energy = mode, e
    return best, float(best_energy)


@dataclass(frozen=True)
class CellScenario:
    capacity: float
    ue_profiles: tuple[UeProfile, ...]
    min_deadline: int = field(default=None)

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        object.__setattr__(self, "ue_profiles", tuple(self.ue_profiles))
        if self.ue_profiles:
            dmin = min(p.delay_req for p in self.ue_profiles)
            if self.min_deadline is None:
                object.__setattr__(self, "min_deadline", dmin)
            elif self.min_deadline != dmin:
                raise ValueError("min_deadline must equal the smallest UE delay requirement")

    @property
    def max_delay(self) -> int:
        return max((p.delay_req for p in self.ue_profiles), default=0)


@dataclass
class PowerLedger:
    power: np.ndarray  # relative power per TTI of the window
    gaps: list  # (start, length, mode name, energy)
    active_energy: float
    gap_energy: float

    @property
    def total_energy(self) -> float:
        return self.active_energy + self.gap_energy

    def average_power(self) -> float:
        return self.total_energy / len(self.power)


@dataclass
class SimResult:
    trace: Trace
    status: np.ndarray
    delivered_at: np.ndarray
    remaining: np.ndarray
    ledger: PowerLedger
    utilization: np.ndarray  # s_f per TTI of [0, T)
    sent: np.ndarray  # bytes per TTI of [0, T + drain)
    config: DtxConfig
    capacity: float
    window: int
    drain: int

    def write(self, fh: TextIO, per_tti: bool = False) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["packet_id", "ue_id", "arrival", "size", "deadline",
                    "status", "delivered_at", "remaining"])
        t = self.trace
        for i in range(len(t)):
            w.writerow([
                int(t.ids[i]), int(t.ue[i]), int(t.arrival[i]), int(t.size[i]),
                int(t.deadline[i]), STATUS_NAMES[int(self.status[i])],
                int(self.delivered_at[i]) if self.status[i] == DELIVERED else "",
                repr(float(self.remaining[i])),
            ])
        if per_tti:
            fh.write("\n")
            w.writerow(["tti", "power", "utilization", "bytes_sent"])
            for k in range(self.window):
                w.writerow([k, repr(float(self.ledger.power[k])),
                            repr(float(self.utilization[k])), repr(float(self.sent[k]))])


def run(
    scenario: CellScenario,
    config: DtxConfig,
    window: int,
    drain: int,
    arrivals: Trace,
) -> SimResult:
    """Simulate ``window`` ms of downlink plus ``drain`` ms of packet resolution.

    Packets are served FIFO in active TTIs up to ``scenario.capacity`` bytes
    per TTI; a pending packet whose deadline is <= the current TTI is dropped.
    Power and utilisation are only accounted inside [0, window).
    """
    if window <= 0:
        raise ValueError("window must be positive")
    if drain < scenario.max_delay:
        raise ValueError(f"drain {drain} shorter than max delay {scenario.max_delay}")
    arr = arrivals.arrival
    if len(arr):
        if arr[0] < 0 or arr[-1] >= window:
            raise ValueError("arrivals outside the simulation window")
        if np.any(np.diff(arr) < 0):
            raise ValueError("arrivals must be sorted")

    horizon = window + drain
    capacity = float(scenario.capacity)
    n = len(arrivals)
    arrival = arr.tolist()
    deadline = arrivals.deadline.tolist()
    remaining = arrivals.size.astype(float).tolist()
    status = [PENDING] * n
    delivered_at = [-1] * n
    sent = np.zeros(horizon)

    active_ttis = np.flatnonzero(active_mask(config, 0, horizon)).tolist()
    head = 0  # every packet before head is resolved
    nxt = 0  # first packet not yet arrived
    for t in active_ttis:
        while nxt < n and arrival[nxt] <= t:
            nxt += 1
        if head == nxt:
            if nxt == n:
                break
            continue
        budget = capacity
        i = head
        while i < nxt and budget > 0.0:
            if status[i] != PENDING:
                i += 1
                continue
            if deadline[i] <= t:
                status[i] = DROPPED
                i += 1
                continue
            r = remaining[i]
            if r <= budget:
                budget -= r
                remaining[i] = 0.0
                status[i] = DELIVERED
                delivered_at[i] = t
                i += 1
            else:
                remaining[i] = r - budget
                budget = 0.0
        # expired packets right behind the served ones are resolved eagerly
        # so that head only ever advances over resolved entries
        while i < nxt and status[i] == PENDING and deadline[i] <= t:
            status[i] = DROPPED
            i += 1
        while head < i and status[head] != PENDING:
            head += 1
        sent[t] = capacity - budget

    # anything left whose deadline has passed by the end of the horizon
    for i in range(head, n):
        if status[i] == PENDING and deadline[i] <= horizon - 1:
            status[i] = DROPPED

    ledger, util = _account_power(config, window, sent[:window], capacity)
    return SimResult(
        trace=arrivals,
        status=np.asarray(status, dtype=np.int8),
        delivered_at=np.asarray(delivered_at, dtype=np.int64),
        remaining=np.asarray(remaining, dtype=float),
        ledger=ledger,
        utilization=util,
        sent=sent,
        config=config,
        capacity=capacity,
        window=window,
        drain=drain,
    )


def _account_power(config, window, sent, capacity):
    util = np.minimum(sent / capacity, 1.0)
    active = active_mask(config, 0, window)
    power = np.where(sent > 0, 110.0 + 90.0 * util, IDLE_POWER)
    power[~active] = 0.0
    active_energy = float(power[active].sum())
    gaps = []
    gap_energy = 0.0
    for start, length in non_active_gaps(config, 0, window):
        mode, energy = plan_sleep(length)
        gaps.append((start, length, mode.name, energy))
        power[start:start + length] = energy / length
        gap_energy += energy
    return PowerLedger(power, gaps, active_energy, gap_energy), util
