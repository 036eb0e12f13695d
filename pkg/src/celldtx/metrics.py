"""QoS / power metrics and RAN observations computed from a simulated window."""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields

import numpy as np

from .cellsim import DELIVERED, MAX_DL_POWER, PENDING, PowerLedger, SimResult
from .traffic import Trace


class UnresolvedPacketError(RuntimeError):
    """A packet of the measured window has neither been delivered nor dropped."""


@dataclass(frozen=True)
class Observation:
    traffic_intensity: float  # bytes / ms
    interarrival_mean: float  # ms
    interarrival_var: float  # ms^2
    pktsize_mean: float  # bytes
    pktsize_var: float  # bytes^2
    delay_min: float  # ms
    delay_wavg: float  # ms, weighted by packet size
    tx_capability: float  # bytes / ms

    def to_array(self) -> np.ndarray:
        return np.asarray(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "Observation":
        return cls(*(float(v) for v in values))


OBSERVATION_FIELDS = tuple(f.name for f in fields(Observation))
N_FEATURES = len(OBSERVATION_FIELDS)


@dataclass(frozen=True)
class PeriodMetrics:
    x: float
    y: float
    prb_util: float


def delivered_data_ratio(result: SimResult) -> float:
    """Bytes of in-time packets over bytes of all packets that arrived."""
    size = result.trace.size
    if len(size) == 0:
        return 1.0
    if np.any(result.status == PENDING):
        raise UnresolvedPacketError(
            f"{int(np.sum(result.status == PENDING))} packets still pending; "
            "extend the drain window"
        )
    ok = result.status == DELIVERED
    y_a = float(size[ok].sum())
    y_f = float(size[~ok].sum())
    return y_a / (y_a + y_f)


def normalized_power(ledger: PowerLedger, window_len: int) -> float:
    return ledger.total_energy / window_len / MAX_DL_POWER


def period_metrics(result: SimResult) -> PeriodMetrics:
    return PeriodMetrics(
        x=normalized_power(result.ledger, result.window),
        y=delivered_data_ratio(result),
        prb_util=float(result.utilization.mean()),
    )


def traffic_features(trace: Trace, window_len: int) -> np.ndarray:
    """The first seven observation entries, from the arrivals alone."""
    out = np.zeros(7)
    if len(trace) == 0:
        return out
    size = trace.size.astype(float)
    delay = (trace.deadline - trace.arrival).astype(float)
    out[0] = size.sum() / window_len
    if len(trace) > 1:
        gaps = np.diff(trace.arrival).astype(float)
        out[1] = gaps.mean()
        out[2] = gaps.var()
    out[3] = size.mean()
    out[4] = size.var()
    out[5] = delay.min()
    out[6] = np.dot(size, delay) / size.sum()
    return out


def tx_capability(result: SimResult, fallback: float = 0.0) -> float:
    """Mean of bytes_sent / s_f over TTIs of the window that transmitted."""
    sent = result.sent[: result.window]
    util = result.utilization
    mask = (sent > 0) & (util > 0)
    if not mask.any():
        return fallback
    return float(np.mean(sent[mask] / util[mask]))


def extract_observation(
    result: SimResult, arrivals: Trace | None = None, fallback_capability: float = 0.0
) -> Observation:
    """Observation vector for the window simulated in ``result``.

    ``arrivals`` defaults to the trace the result was simulated on.  When no
    TTI transmitted, ``fallback_capability`` (e.g. the last known value) is
    reported as the transmission capability.
    """
    if result.window <= 0:
        raise ValueError("empty window")
    trace = result.trace if arrivals is None else arrivals
    feats = traffic_features(trace, result.window)
    return Observation(*feats, tx_capability(result, fallback_capability))
