"""
Capacity planning against a design point.

A link sized with ``required_capacity`` for ``n`` flows runs every
anchored AQM exactly at the design point. When ``m`` times more flows
are aggregated, queue variation shrinks by ``sqrt(m)``; cutting the delay
target by the same factor without raising drop needs extra capacity,
given by ``overprovision_factor``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import DomainError
from .model import DesignPoint, TrafficModel, serialization_delay

# Below roughly half a dozen packets the queue stops shrinking with aggregation.
BUFFER_FLOOR_PACKETS = 6

DEFAULT_AGGREGATION = (4, 25, 100)


class BufferFloorWarning(UserWarning):
    """A delay target is shorter than the serialization of a few packets."""


@dataclass(frozen=True)
class ProvisioningInput:
    traffic: TrafficModel
    design: DesignPoint
    flows: float

    def __post_init__(self):
        if not self.flows > 0:
            raise DomainError(f"flow count must be positive, got {self.flows}")


@dataclass(frozen=True)
class AggregationScenario:
    factor: float  # m, multiplier on the flow count
    base_rtt: float
    design_delay: float

    def __post_init__(self):
        if not self.factor > 1:
            raise DomainError(f"aggregation factor must exceed 1, got {self.factor}")

    @property
    def delay_target(self):
        return aggregated_delay_target(self.design_delay, self.factor)

    @property
    def overprovision(self):
        return overprovision_factor(self.base_rtt, self.design_delay, self.factor)


def required_capacity(inp: ProvisioningInput) -> float:
    """Capacity in bits/second that holds ``inp.flows`` flows at the design point."""
    tm, dp = inp.traffic, inp.design
    return (
        tm.tcp_constant * inp.flows * tm.mss
        / ((tm.base_rtt + dp.delay) * math.sqrt(dp.drop))
    )


def supportable_flows(tm: TrafficModel, capacity: float, dp: DesignPoint) -> float:
    if not capacity > 0:
        raise DomainError(f"capacity must be positive, got {capacity}")
    return capacity * (tm.base_rtt + dp.delay) * math.sqrt(dp.drop) / (tm.tcp_constant * tm.mss)


def overprovision_factor(base_rtt: float, design_delay: float, factor: float) -> float:
    """Capacity multiplier ``X'/X`` needed to cut the delay target to ``d*/sqrt(m)``.

    ``X`` here is the capacity sized in proportion to the aggregated flow
    count; m = 1 gives exactly 1.
    """
    if not factor >= 1:
        raise DomainError(f"aggregation factor must be at least 1, got {factor}")
    if not base_rtt > 0 or design_delay < 0:
        raise DomainError("delays must be positive")
    return (base_rtt + design_delay) / (base_rtt + design_delay / math.sqrt(factor))


def aggregated_delay_target(design_delay: float, factor: float, mss=None, capacity=None) -> float:
    """Design delay reduced by ``sqrt(factor)``.

    With ``mss`` and ``capacity`` given, emits :class:`BufferFloorWarning`
    when the target is shorter than six packets' serialization time.
    """
    if not factor >= 1:
        raise DomainError(f"aggregation factor must be at least 1, got {factor}")
    target = design_delay / math.sqrt(factor)
    if mss is not None and capacity is not None and below_buffer_floor(target, mss, capacity):
        warnings.warn(
            f"delay target {target * 1e3:.3g} ms is below {BUFFER_FLOOR_PACKETS} "
            f"packets at {capacity / 1e6:.4g} Mb/s; aggregation will not shrink the queue further",
            BufferFloorWarning,
            stacklevel=2,
        )
    return target


def below_buffer_floor(delay: float, mss: float, capacity: float) -> bool:
    return delay < BUFFER_FLOOR_PACKETS * serialization_delay(mss, capacity)


def effective_flow_count(bdp: float, variation: float) -> float:
    """Equivalent number of Reno flows, ``(BDP / nu) ** 2``.

    ``bdp`` and ``variation`` must be in the same unit.
    """
    if not bdp > 0 or not variation > 0:
        raise DomainError("BDP and queue variation must be positive")
    return (bdp / variation) ** 2


@dataclass(frozen=True)
class AggregationRow:
    factor: float
    delay_target: float
    overprovision: float
    capacity: float  # for factor * flows, bits/second
    below_floor: bool


def aggregation_table(inp: ProvisioningInput, factors=DEFAULT_AGGREGATION):
    """One row per aggregation factor for a link carrying ``factor * inp.flows``."""
    tm, dp = inp.traffic, inp.design
    base = required_capacity(inp)
    rows = []
    for m in factors:
        target = aggregated_delay_target(dp.delay, m)
        ratio = overprovision_factor(tm.base_rtt, dp.delay, m)
        capacity = base * m * ratio
        rows.append(AggregationRow(m, target, ratio, capacity,
                                   below_buffer_floor(target, tm.mss, capacity)))
    return rows
