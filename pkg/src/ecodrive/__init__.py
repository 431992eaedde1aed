"""Energy-optimal speed advisory, closed-loop simulation, and eco-scoring."""

__version__ = "0.1.0"

from .ocp import (  # noqa: F401
    BoundaryConditions,
    LeadState,
    SpeedProfile,
    adjust_horizon,
    lead_gap_margin,
    profile_cost,
    solve_unconstrained,
    speed_limit_margin,
)
from .vehicle import (  # noqa: F401
    KinState,
    TripTrace,
    VehicleParams,
    battery_power,
    evaluate_trace_energy,
    resistive_forces,
)
