"""
Steady-state delay and drop as functions of normalized load.

Substituting the Curvy RED law into the Reno rate equation ties the flow
count per unit capacity to queuing delay alone::

    L * D_R = (D_R + d_q) * (d_q / D_q) ** (u / 2)

which is strictly increasing in d_q, so it is inverted by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DomainError, SaturationError, UnsupportedOperation
from .model import (
    AqmCurve,
    Clamp,
    CurvyRed,
    DesignPoint,
    TrafficModel,
    anchored_curve,
    drop_prob,
    rate_for_load,
)

BRACKET_FLOOR = 1e-12  # seconds
REL_TOL = 1e-9
MAX_ITER = 200

DEFAULT_ECN_COUPLING = 2.0
DEFAULT_GRID = (0.02, 2.0, 200)


def bisect_increasing(f, target, lo, hi, rtol=REL_TOL, max_iter=MAX_ITER):
    """Find x in [lo, hi] with f(x) == target for strictly increasing f.

    Bisects on the geometric midpoint so that roots many decades below
    ``hi`` are still resolved to relative precision. Stops when
    ``|f(x) / target - 1| <= rtol / 2`` or the bracket stops shrinking.
    """
    if not 0 < lo < hi:
        raise DomainError(f"bad bracket [{lo}, {hi}]")
    if f(lo) > target:
        raise DomainError(f"target {target:.6g} lies below f({lo:g})")
    x = hi
    for _ in range(max_iter):
        x = math.sqrt(lo * hi)
        fx = f(x)
        if abs(fx - target) <= 0.5 * rtol * abs(target):
            return x
        if fx < target:
            lo = x
        else:
            hi = x
        if hi / lo - 1.0 < 1e-15:
            break
    return x


def _require_curvy(curve):
    if not isinstance(curve, CurvyRed):
        raise UnsupportedOperation("operation needs a Curvy RED curve, not a clamp")


def saturation_load(tm: TrafficModel, curve: CurvyRed) -> float:
    """Largest load the curve absorbs before drop hits 100%."""
    _require_curvy(curve)
    return (tm.base_rtt + curve.scale_delay) / tm.base_rtt


def load_from_delay(tm: TrafficModel, curve: CurvyRed, delay: float) -> float:
    _require_curvy(curve)
    if not 0 < delay <= curve.scale_delay:
        raise DomainError(
            f"queuing delay {delay} outside (0, {curve.scale_delay}]"
        )
    flows_per_capacity = (
        (tm.base_rtt + delay)
        * (delay / curve.scale_delay) ** (curve.curviness / 2)
        / (tm.tcp_constant * tm.mss)
    )
    return tm.tcp_constant * tm.mss * flows_per_capacity / tm.base_rtt


def _load_unchecked(tm, curve, delay):
    return (tm.base_rtt + delay) * (delay / curve.scale_delay) ** (curve.curviness / 2) / tm.base_rtt


def solve_delay(tm: TrafficModel, curve: CurvyRed, load: float) -> float:
    """Queuing delay at which ``load`` is in equilibrium with the curve.

    Raises :class:`SaturationError` past the saturation load.
    """
    _require_curvy(curve)
    if not load > 0:
        raise DomainError(f"load must be positive, got {load}")
    max_load = saturation_load(tm, curve)
    if load > max_load:
        raise SaturationError(load, max_load)
    if load == max_load:
        return curve.scale_delay
    f = lambda d: _load_unchecked(tm, curve, d)
    lo = BRACKET_FLOOR
    # concave curves (u < 1) can put light-load roots below the usual floor
    while f(lo) > load and lo > 1e-290:
        lo *= 1e-12
    return bisect_increasing(f, load, lo, curve.scale_delay)


def solve_loss(tm: TrafficModel, curve: CurvyRed, load: float) -> float:
    return drop_prob(curve, solve_delay(tm, curve, load))


@dataclass(frozen=True)
class ClampPoint:
    """Equilibrium under a delay clamp.

    ``signal`` says whether ``probability`` is a drop ("drop") or an ECN
    mark ("mark"); only drops count as a loss impairment.
    """

    delay: float
    probability: float
    saturated: bool = False
    signal: str = "drop"

    @property
    def delay_impairment(self):
        return self.delay

    @property
    def loss_impairment(self):
        return self.probability if self.signal == "drop" else 0.0

    def __iter__(self):
        return iter((self.delay, self.probability))


def clamp_point(tm: TrafficModel, target: float, load: float) -> ClampPoint:
    if not load > 0:
        raise DomainError(f"load must be positive, got {load}")
    if not target > 0:
        raise DomainError(f"clamp target must be positive, got {target}")
    p = (load * tm.base_rtt / (tm.base_rtt + target)) ** 2
    if p > 1.0:
        return ClampPoint(target, 1.0, saturated=True)
    return ClampPoint(target, p)


def ecn_clamp_point(tm: TrafficModel, target: float, load: float) -> ClampPoint:
    """Same equilibrium as :func:`clamp_point`, signalled by ECN marks."""
    pt = clamp_point(tm, target, load)
    return ClampPoint(pt.delay, pt.probability, pt.saturated, signal="mark")


def mark_to_drop_equiv(p_mark: float, coupling: float = DEFAULT_ECN_COUPLING) -> float:
    """Drop probability carrying the same congestion signal as ``p_mark``.

    Drop goes as the square of marking: ``(p_mark / k) ** 2``.
    """
    if not 0 <= p_mark <= 1:
        raise DomainError(f"mark probability must be in [0, 1], got {p_mark}")
    if not coupling > 0:
        raise DomainError(f"coupling factor must be positive, got {coupling}")
    return min(1.0, (p_mark / coupling) ** 2)


def drop_to_mark(p_drop: float, coupling: float = DEFAULT_ECN_COUPLING) -> float:
    if not 0 <= p_drop <= 1:
        raise DomainError(f"drop probability must be in [0, 1], got {p_drop}")
    if not coupling > 0:
        raise DomainError(f"coupling factor must be positive, got {coupling}")
    return min(1.0, coupling * math.sqrt(p_drop))


def design_crossing_load(tm: TrafficModel, dp: DesignPoint) -> float:
    """Load at which every curve anchored at ``dp`` sits exactly on it."""
    return math.sqrt(dp.drop) * (tm.base_rtt + dp.delay) / tm.base_rtt


@dataclass(frozen=True)
class CurvePoint:
    load: float
    delay: float
    drop: float
    rate: float  # per-flow, bits/second
    saturated: bool = False


def solve_point(tm: TrafficModel, curve: AqmCurve, load: float) -> CurvePoint:
    """Equilibrium (delay, drop) of any AQM kind, never raising on saturation.

    Past a Curvy RED curve's saturation load the drop stays at 1 and the
    queue keeps absorbing load, so ``d_q = D_R (L - 1)``.
    """
    rate = rate_for_load(tm, load)
    if isinstance(curve, Clamp):
        pt = clamp_point(tm, curve.target, load)
        return CurvePoint(load, pt.delay, pt.probability, rate, pt.saturated)
    try:
        delay = solve_delay(tm, curve, load)
    except SaturationError:
        return CurvePoint(load, tm.base_rtt * (load - 1.0), 1.0, rate, True)
    return CurvePoint(load, delay, drop_prob(curve, delay), rate)


@dataclass
class CurveFamily:
    curviness: list  # math.inf stands for the clamp
    grid: list
    points: dict = field(default_factory=dict)  # curviness -> [CurvePoint]

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise DomainError("load grid must be strictly increasing")

    def series(self, curviness):
        return self.points[curviness]


def log_grid(lo=DEFAULT_GRID[0], hi=DEFAULT_GRID[1], count=DEFAULT_GRID[2]):
    """``count`` log-spaced loads from ``lo`` to ``hi`` inclusive."""
    if not 0 < lo < hi:
        raise DomainError(f"bad grid range [{lo}, {hi}]")
    if count < 2:
        raise DomainError("grid needs at least two points")
    step = math.log(hi / lo) / (count - 1)
    grid = [lo * math.exp(i * step) for i in range(count)]
    grid[-1] = hi
    return grid


def solve_family(tm: TrafficModel, curves: dict, grid) -> CurveFamily:
    """Solve prebuilt curves, keyed by curviness (inf for a clamp), over ``grid``."""
    grid = list(grid)
    if not grid:
        raise DomainError("load grid is empty")
    if grid[0] <= 0:
        raise DomainError("loads must be positive")
    family = CurveFamily(list(curves), grid)
    for u, curve in curves.items():
        family.points[u] = [solve_point(tm, curve, load) for load in grid]
    return family


def generate_family(
    tm: TrafficModel,
    dp: DesignPoint,
    curviness_values,
    include_clamp: bool = True,
    grid=None,
) -> CurveFamily:
    """Solve every curve anchored at ``dp`` (and optionally the clamp) over a load grid.

    The clamp target is the design delay. Grid points past a curve's
    saturation load come back flagged ``saturated``.
    """
    us = [float(u) for u in curviness_values]
    for u in us:
        if not u > 0:
            raise DomainError(f"curviness must be positive, got {u}")
    if include_clamp and math.inf not in us:
        us.append(math.inf)
    curves = {u: anchored_curve(dp, u) for u in us}
    return solve_family(tm, curves, log_grid() if grid is None else grid)
