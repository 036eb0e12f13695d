"""Reward functions trading normalized power ``x`` against delivered ratio ``y``.

* ``linear``: fixed-weight blend of power and failed-data ratio.
* ``qos_threshold``: piecewise; pure energy objective once ``y >= y0``,
  otherwise pure QoS, with every QoS-satisfying reward above every violating one.
* ``qos_approx``: smooth surrogate of the threshold reward.  ``m`` trades
  smoothness for sharpness of the transition, ``alpha`` sets the reward floor.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass


def reward_linear(x: float, y: float, c: float) -> float:
    return -(1.0 - c) * x - c * (1.0 - y)


def reward_qos_threshold(x: float, y: float, a: float, b: float, y0: float) -> float:
    if y >= y0:
        return -a * x
    return y - b


def _qos_ratio_power(x, y, y0, m):
    """((1 - y) / ((1 - y0)(1 - x)))**m, evaluated in log space.

    Returns 0 when y == 1 (even at x == 1) and inf when x == 1 and y < 1.
    """
    fail = 1.0 - y
    if fail <= 0.0:
        return 0.0
    if x >= 1.0:
        return math.inf
    log_u = m * (math.log(fail) - math.log1p(-y0) - math.log1p(-x))
    if log_u > 700.0:
        return math.inf
    return math.exp(log_u)


def reward_qos_approx(x: float, y: float, y0: float, m: float, alpha: float) -> float:
    u = _qos_ratio_power(x, y, y0, m)
    floor = 1.0 + (alpha - 1.0) * (1.0 - y)
    if math.isinf(u):
        return -floor
    return -(u * floor + x) / (u + 1.0)


@dataclass(frozen=True)
class RewardSpec:
    """One reward variant with its constants; callable as ``spec(x, y)``."""

    variant: str
    c: float = 0.75
    a: float = 1.0
    b: float = 1.9
    y0: float = 0.9
    m: float = 2.0
    alpha: float = 3.0

    def __post_init__(self):
        if self.variant == "linear":
            if not 0.0 <= self.c <= 1.0:
                raise ValueError("linear reward needs 0 <= c <= 1")
        elif self.variant == "qos_threshold":
            if self.a <= 0 or -self.a < self.y0 - self.b - 1e-12:
                raise ValueError("qos_threshold needs a > 0 and -a >= y0 - b")
        elif self.variant == "qos_approx":
            if not 0.0 < self.y0 < 1.0 or self.m <= 0 or self.alpha <= 1:
                raise ValueError("qos_approx needs 0 < y0 < 1, m > 0, alpha > 1")
        else:
            raise ValueError(f"unknown reward variant {self.variant!r}")

    def __call__(self, x: float, y: float) -> float:
        if self.variant == "linear":
            return reward_linear(x, y, self.c)
        if self.variant == "qos_threshold":
            return reward_qos_threshold(x, y, self.a, self.b, self.y0)
        return reward_qos_approx(x, y, self.y0, self.m, self.alpha)

    def to_dict(self) -> dict:
        keep = {
            "linear": ("c",),
            "qos_threshold": ("a", "b", "y0"),
            "qos_approx": ("y0", "m", "alpha"),
        }[self.variant]
        d = asdict(self)
        return {"variant": self.variant, **{k: d[k] for k in keep}}

    @classmethod
    def from_dict(cls, d: dict) -> "RewardSpec":
        return cls(**d)


def linear(c: float = 0.75) -> RewardSpec:
    return RewardSpec("linear", c=c)


def qos_threshold(a: float = 1.0, y0: float = 0.9, b: float | None = None) -> RewardSpec:
    return RewardSpec("qos_threshold", a=a, b=1.0 + y0 if b is None else b, y0=y0)


def qos_approx(y0: float = 0.9, m: float = 2.0, alpha: float = 3.0) -> RewardSpec:
    return RewardSpec("qos_approx", y0=y0, m=m, alpha=alpha)
