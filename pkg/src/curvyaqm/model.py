"""
Domain types and closed-form relations between TCP load, RTT and drop.

All quantities are SI internally: seconds, bits, bits/second, and
probabilities as fractions. Human units (ms, bytes, Mb/s, %) are only
handled by the CLI.

Curvy RED maps queuing delay to drop probability with a power law::

    p = min(1, (d_q / D_q) ** u)

and a long-running Reno flow settles at ``x = K s / (d_R sqrt(p))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

from .errors import DomainError, UnsupportedOperation

RENO_K = math.sqrt(1.5)
CUBIC_RENO_K = 1.68

BITS_PER_BYTE = 8


@dataclass(frozen=True)
class TrafficModel:
    """Everything characterizing the flows and their paths.

    ``base_rtt`` is the harmonic mean of the flows' base RTTs.
    """

    tcp_constant: float  # K
    mss: float  # bits
    base_rtt: float  # seconds

    def __post_init__(self):
        if not self.tcp_constant > 0:
            raise DomainError(f"TCP constant must be positive, got {self.tcp_constant}")
        if not self.mss > 0:
            raise DomainError(f"MSS must be positive, got {self.mss}")
        if not self.base_rtt > 0:
            raise DomainError(f"base RTT must be positive, got {self.base_rtt}")

    @classmethod
    def reno(cls, mss_bytes=1500, base_rtt=0.020):
        return cls(RENO_K, mss_bytes * BITS_PER_BYTE, base_rtt)

    @classmethod
    def cubic_reno(cls, mss_bytes=1500, base_rtt=0.020):
        return cls(CUBIC_RENO_K, mss_bytes * BITS_PER_BYTE, base_rtt)


@dataclass(frozen=True)
class CurvyRed:
    """Power-law AQM: drop reaches 100% at ``scale_delay``."""

    curviness: float  # u
    scale_delay: float  # D_q, seconds

    def __post_init__(self):
        if not self.curviness > 0:
            raise DomainError(f"curviness must be positive, got {self.curviness}")
        if not self.scale_delay > 0:
            raise DomainError(f"scale delay must be positive, got {self.scale_delay}")

    @property
    def concave(self):
        """True for u < 1, a regime nobody has characterised yet."""
        return self.curviness < 1


@dataclass(frozen=True)
class Clamp:
    """Idealised delay-target AQM (PIE/CoDel style): holds d_q at ``target``.

    This is the u -> infinity member of the Curvy RED family.
    """

    target: float  # seconds

    def __post_init__(self):
        if not self.target > 0:
            raise DomainError(f"clamp target must be positive, got {self.target}")

    curviness = math.inf


AqmCurve = Union[CurvyRed, Clamp]


@dataclass(frozen=True)
class DesignPoint:
    """The (delay, drop) pair every AQM configuration is anchored to."""

    delay: float  # seconds
    drop: float  # probability

    def __post_init__(self):
        if not self.delay > 0:
            raise DomainError(f"design delay must be positive, got {self.delay}")
        if not 0 < self.drop <= 1:
            raise DomainError(f"design drop must be in (0, 1], got {self.drop}")


@dataclass(frozen=True)
class Link:
    capacity: float  # bits/second

    def __post_init__(self):
        if not self.capacity > 0:
            raise DomainError(f"capacity must be positive, got {self.capacity}")


@dataclass(frozen=True)
class OperatingPoint:
    load: float
    flows: float
    delay: float  # queuing delay, seconds
    drop: float
    rate: float  # per-flow, bits/second
    rtt: float  # seconds


def _check_prob(p, name="p"):
    if not 0 < p <= 1:
        raise DomainError(f"{name} must be in (0, 1], got {p}")


def drop_prob(curve: AqmCurve, delay: float) -> float:
    """Drop probability of a Curvy RED AQM at queuing delay ``delay``."""
    if isinstance(curve, Clamp):
        raise UnsupportedOperation("a clamp AQM has no delay-to-drop mapping")
    if delay < 0:
        raise DomainError(f"queuing delay must be non-negative, got {delay}")
    if delay >= curve.scale_delay:
        return 1.0
    return (delay / curve.scale_delay) ** curve.curviness


def scale_from_design(dp: DesignPoint, curviness: float) -> float:
    """Scaling delay D_q that makes a curve of the given curviness pass through ``dp``."""
    if not curviness > 0:
        raise DomainError(f"curviness must be positive, got {curviness}")
    return dp.delay / dp.drop ** (1.0 / curviness)


def anchored_curve(dp: DesignPoint, curviness: float) -> AqmCurve:
    """Curvy RED through ``dp``; infinite curviness yields the clamp."""
    if math.isinf(curviness):
        return Clamp(dp.delay)
    return CurvyRed(curviness, scale_from_design(dp, curviness))


def reno_rate(tm: TrafficModel, rtt: float, p: float) -> float:
    """Steady-state Reno throughput in bits/second."""
    if not rtt > 0:
        raise DomainError(f"RTT must be positive, got {rtt}")
    _check_prob(p)
    return tm.tcp_constant * tm.mss / (rtt * math.sqrt(p))


def rtt(tm: TrafficModel, delay: float) -> float:
    if delay < 0:
        raise DomainError(f"queuing delay must be non-negative, got {delay}")
    return tm.base_rtt + delay


def flows_from_point(tm: TrafficModel, capacity: float, delay: float, p: float) -> float:
    """Number of Reno flows (a real number) that fill ``capacity`` at (delay, p)."""
    if not capacity > 0:
        raise DomainError(f"capacity must be positive, got {capacity}")
    _check_prob(p)
    return capacity * rtt(tm, delay) * math.sqrt(p) / (tm.tcp_constant * tm.mss)


def normalized_load(tm: TrafficModel, flows: float, capacity: float) -> float:
    """Capacity-invariant load ``K s n / (D_R X)``."""
    if flows < 0:
        raise DomainError(f"flow count must be non-negative, got {flows}")
    if not capacity > 0:
        raise DomainError(f"capacity must be positive, got {capacity}")
    return tm.tcp_constant * tm.mss * flows / (tm.base_rtt * capacity)


def load_for_rate(tm: TrafficModel, rate: float) -> float:
    """Normalized load at which each flow gets ``rate`` bits/second."""
    if not rate > 0:
        raise DomainError(f"rate must be positive, got {rate}")
    return tm.tcp_constant * tm.mss / (tm.base_rtt * rate)


def rate_for_load(tm: TrafficModel, load: float) -> float:
    """Per-flow rate implied by a normalized load; inverse of :func:`load_for_rate`."""
    if not load > 0:
        raise DomainError(f"load must be positive, got {load}")
    return tm.tcp_constant * tm.mss / (tm.base_rtt * load)


def serialization_delay(mss: float, capacity: float) -> float:
    if not capacity > 0:
        raise DomainError(f"capacity must be positive, got {capacity}")
    return mss / capacity
