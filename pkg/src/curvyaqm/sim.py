"""
Round-based AIMD simulator for checking the steady-state fixed points.

Each round lasts one mean RTT. All flows share one bottleneck queue whose
delay is whatever the aggregate window holds beyond the pipe::

    d_q = max(0, (sum(cwnd) * s - X * D_R) / X)

The AQM turns d_q into a drop probability ``p``; each flow then loses at
most one packet per round with probability ``1 - (1 - p) ** cwnd`` and
halves its window, otherwise it grows by one segment.

Randomness comes from numpy's PCG64 generator seeded from the config, so
a config always reproduces the same run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SimulationUnstable, UnsupportedOperation
from .model import AqmCurve, Clamp, CurvyRed, TrafficModel, drop_prob, normalized_load
from .steady_state import solve_delay, solve_loss

RNG_NAME = "numpy.random.PCG64"

DEFAULT_DURATION = 20000
DIVERGENCE_RTTS = 100.0
CLAMP_GAIN = 0.002


@dataclass(frozen=True)
class SimConfig:
    traffic: TrafficModel
    capacity: float  # bits/second
    n_flows: int
    aqm: AqmCurve
    duration_rtts: int = DEFAULT_DURATION
    warmup_rtts: int | None = None  # 30% of duration when None
    seed: int = 0

    def __post_init__(self):
        if int(self.n_flows) != self.n_flows or self.n_flows < 1:
            raise ValueError(f"n_flows must be a positive integer, got {self.n_flows}")
        if not self.capacity > 0:
            raise ValueError(f"capacity must be positive, got {self.capacity}")
        if self.duration_rtts < 1:
            raise ValueError("duration must be at least one round")
        if self.warmup_rtts is None:
            object.__setattr__(self, "warmup_rtts", int(0.3 * self.duration_rtts))
        if not 0 <= self.warmup_rtts < self.duration_rtts:
            raise ValueError("warmup must be non-negative and shorter than the run")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def load(self):
        return normalized_load(self.traffic, self.n_flows, self.capacity)


@dataclass(frozen=True)
class SimResult:
    mean_delay: float
    mean_drop: float
    mean_rate_per_flow: float
    utilization: float
    samples: int
    min_cwnd: float  # smallest window seen in any round
    rng: str = RNG_NAME


@dataclass
class Trace:
    delay: list = field(default_factory=list)
    drop: list = field(default_factory=list)
    rate_total: list = field(default_factory=list)


def run(cfg: SimConfig, trace: Trace | None = None) -> SimResult:
    """Simulate ``cfg.duration_rtts`` rounds and average after warmup.

    Averages are time-weighted by round length ``D_R + d_q``. If ``trace``
    is given, per-round delay, drop and aggregate rate are appended to it.
    """
    tm = cfg.traffic
    s, cap, base = tm.mss, cfg.capacity, tm.base_rtt
    pipe = cap * base
    limit = DIVERGENCE_RTTS * base
    clamp = isinstance(cfg.aqm, Clamp)
    if not clamp and not isinstance(cfg.aqm, CurvyRed):
        raise UnsupportedOperation(f"unknown AQM {cfg.aqm!r}")

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    cwnd = np.ones(cfg.n_flows)  # segments, floored at 1
    p_ctl = 0.0

    t_sum = dq_sum = p_sum = bits_sum = 0.0
    samples = 0
    min_cwnd = math.inf

    for k in range(cfg.duration_rtts):
        window = float(cwnd.sum())
        dq = max(0.0, (window * s - pipe) / cap)
        if dq > limit:
            raise SimulationUnstable(
                f"queuing delay {dq:.3g} s exceeded {DIVERGENCE_RTTS:g} base RTTs at round {k}"
            )
        if clamp:
            # incremental proportional controller, steers mean d_q to the target
            p_ctl = min(1.0, max(0.0, p_ctl + CLAMP_GAIN * (dq - cfg.aqm.target) / cfg.aqm.target))
            p = p_ctl
        else:
            p = drop_prob(cfg.aqm, dq)

        round_time = base + dq
        min_cwnd = min(min_cwnd, float(cwnd.min()))
        if trace is not None:
            trace.delay.append(dq)
            trace.drop.append(p)
            trace.rate_total.append(window * s / round_time)
        if k >= cfg.warmup_rtts:
            t_sum += round_time
            dq_sum += dq * round_time
            p_sum += p * round_time
            bits_sum += window * s
            samples += 1

        if p >= 1.0:
            cwnd = np.maximum(cwnd * 0.5, 1.0)
        elif p > 0.0:
            # P(at least one of cwnd packets dropped), one decrease per round
            lost = rng.random(cfg.n_flows) < -np.expm1(cwnd * math.log1p(-p))
            cwnd = np.where(lost, np.maximum(cwnd * 0.5, 1.0), cwnd + 1.0)
        else:
            cwnd = cwnd + 1.0

    rate = bits_sum / t_sum
    return SimResult(
        mean_delay=dq_sum / t_sum,
        mean_drop=p_sum / t_sum,
        mean_rate_per_flow=rate / cfg.n_flows,
        utilization=rate / cap,
        samples=samples,
        min_cwnd=min_cwnd,
    )


def run_seeds(cfg: SimConfig, n_seeds: int) -> list:
    """Run ``n_seeds`` consecutive seeds starting at ``cfg.seed``."""
    return [run(replace(cfg, seed=(cfg.seed + i) % 2**64)) for i in range(n_seeds)]


@dataclass(frozen=True)
class FixedPointReport:
    load: float
    analytic_delay: float
    analytic_drop: float
    sim_delay: float
    sim_drop: float
    seeds: int

    @property
    def delay_error(self):
        return abs(self.sim_delay - self.analytic_delay) / self.analytic_delay

    @property
    def drop_error(self):
        return abs(self.sim_drop - self.analytic_drop) / self.analytic_drop


def fixed_point_check(cfg: SimConfig, n_seeds: int = 1) -> FixedPointReport:
    """Compare seed-averaged simulated delay and drop with the analytic solution."""
    if not isinstance(cfg.aqm, CurvyRed):
        raise UnsupportedOperation("fixed-point check needs a Curvy RED AQM")
    results = run_seeds(cfg, n_seeds)
    load = cfg.load
    return FixedPointReport(
        load=load,
        analytic_delay=solve_delay(cfg.traffic, cfg.aqm, load),
        analytic_drop=solve_loss(cfg.traffic, cfg.aqm, load),
        sim_delay=sum(r.mean_delay for r in results) / n_seeds,
        sim_drop=sum(r.mean_drop for r in results) / n_seeds,
        seeds=n_seeds,
    )
