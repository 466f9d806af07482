"""Curvy RED steady-state model: delay and drop against TCP load."""

from .errors import DomainError, SaturationError, SimulationUnstable, UnsupportedOperation
from .model import (
    CUBIC_RENO_K,
    RENO_K,
    AqmCurve,
    Clamp,
    CurvyRed,
    DesignPoint,
    Link,
    OperatingPoint,
    TrafficModel,
    anchored_curve,
    drop_prob,
    flows_from_point,
    load_for_rate,
    normalized_load,
    rate_for_load,
    reno_rate,
    rtt,
    scale_from_design,
    serialization_delay,
)
from .provisioning import (
    AggregationScenario,
    ProvisioningInput,
    aggregated_delay_target,
    effective_flow_count,
    overprovision_factor,
    required_capacity,
    supportable_flows,
)
from .steady_state import (
    CurveFamily,
    CurvePoint,
    clamp_point,
    design_crossing_load,
    drop_to_mark,
    ecn_clamp_point,
    generate_family,
    load_from_delay,
    mark_to_drop_equiv,
    solve_delay,
    solve_loss,
    solve_point,
)

__version__ = "0.1.0"
