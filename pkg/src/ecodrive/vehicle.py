"""Vehicle parameters, longitudinal forces, motor power, and trace energy.

The models target a B-segment electric city car.  Every coefficient is
calibratable through `VehicleParams` or the flat key-value parameter file
handled by `load_vehicle_params` / `save_vehicle_params`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ParamError, TraceError

KMH = 1.0 / 3.6

# speed at which the lumped resistive deceleration is calibrated [m/s]
RESIST_CALIB_SPEED = 30.0 * KMH


@dataclass(frozen=True)
class VehicleParams:
    """Physical and cost parameters of the modeled electric car.

    Defaults approximate a B-segment electric city car (inertial mass lumped
    into `mass`); they are engineering defaults meant to be recalibrated, not
    ground truth.  `resist_decel` and `accel_loss_coeff` are derived from the
    other parameters when left as None.
    """

    mass: float = 1545.0            # [kg]
    air_density: float = 1.2        # [kg/m^3]
    drag_coeff: float = 0.31        # [-]
    frontal_area: float = 2.43      # [m^2]
    rolling_coeff: float = 0.012    # [-]
    gravity: float = 9.81           # [m/s^2]
    wheel_radius: float = 0.2914    # [m]
    # lumped resistive deceleration [m/s^2]; None -> calibrated at RESIST_CALIB_SPEED
    resist_decel: float | None = None
    # quadratic loss coefficient in the acceleration domain (cost integrand);
    # None -> torque_loss_coeff * (mass * wheel_radius)^2
    accel_loss_coeff: float | None = None
    # quadratic motor loss per squared wheel-level torque [W/(N m)^2]
    torque_loss_coeff: float = 0.005
    # multiplier on the mechanical torque*speed term of the motor power
    motor_power_gain: float = 1.0
    accel_limit: float = 3.0        # symmetric acceleration bound [m/s^2]
    regen_power_limit: float = 40e3  # max regenerative power [W]

    def __post_init__(self):
        if self.resist_decel is None:
            f_a, f_r, _ = resistive_forces(RESIST_CALIB_SPEED, 0.0, self)
            object.__setattr__(self, "resist_decel", (f_a + f_r) / self.mass)
        if self.accel_loss_coeff is None:
            object.__setattr__(
                self,
                "accel_loss_coeff",
                self.torque_loss_coeff * (self.mass * self.wheel_radius) ** 2,
            )
        for name in (
            "mass", "air_density", "drag_coeff", "frontal_area",
            "rolling_coeff", "gravity", "wheel_radius", "resist_decel",
            "accel_limit", "regen_power_limit",
        ):
            if not getattr(self, name) > 0.0:
                raise ParamError(f"{name} must be strictly positive")
        if self.accel_loss_coeff < 0 or self.torque_loss_coeff < 0:
            raise ParamError("loss coefficients must be non-negative")

    @property
    def traction_cost_coeff(self) -> float:
        """Linear cost coefficient, mass over wheel radius [kg/m]."""
        return self.mass / self.wheel_radius

    @property
    def decel_limit(self) -> float:
        """Symmetric bound: the deceleration limit equals -accel_limit."""
        return -self.accel_limit


@dataclass(frozen=True)
class KinState:
    """Kinematic state: position along the link, speed, trip time [m, m/s, s]."""

    x: float
    v: float
    t: float

    def __post_init__(self):
        if self.x < 0 or self.v < 0:
            raise ValueError("position and speed must be non-negative")


def resistive_forces(v, slope, params):
    """Aerodynamic, rolling, and grade resistance at speed v [N].

    `slope` is the road angle in radians; returns the tuple (F_a, F_r, F_g).
    """
    f_a = 0.5 * params.air_density * params.drag_coeff * params.frontal_area * v * v
    f_r = params.mass * params.gravity * params.rolling_coeff
    f_g = params.mass * params.gravity * math.sin(slope)
    return f_a, f_r, f_g


def battery_power(v, a, params):
    """Linearized battery power draw at speed v and acceleration a [W].

    This is the cost-integrand form p0*(a+h)*v + p1*(a+h)^2 built on the
    lumped resistive deceleration h, clipped below at the regenerative limit.
    May be negative (regenerative braking); mechanical braking is not modeled.
    """
    ah = np.asarray(a) + params.resist_decel
    p = params.traction_cost_coeff * ah * np.asarray(v) + params.accel_loss_coeff * ah * ah
    return np.maximum(p, -params.regen_power_limit)[()]


@dataclass
class TripTrace:
    """Time-stamped (t, x, v) samples of one trip, in SI units."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    vehicle_id: str = ""
    route_id: str = ""

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if not (self.t.shape == self.x.shape == self.v.shape) or self.t.ndim != 1:
            raise TraceError("t, x, v must be 1-d arrays of equal length")
        if len(self.t) == 0:
            raise TraceError("empty trace")
        dt = np.diff(self.t)
        if np.any(dt <= 0):
            k = int(np.argmax(dt <= 0))
            raise TraceError(f"timestamps not strictly increasing at sample {k + 1}")
        if np.any(np.diff(self.x) < -1e-9):
            raise TraceError("position must be non-decreasing")
        if np.any(self.v < -1e-12):
            raise TraceError("speed must be non-negative")

    def __len__(self):
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def distance(self) -> float:
        return float(self.x[-1] - self.x[0])

    @property
    def mean_speed(self) -> float:
        return self.distance / self.duration if self.duration > 0 else 0.0

    def accel(self) -> np.ndarray:
        """Finite-difference acceleration: central interior, one-sided ends."""
        if len(self.t) < 2:
            raise TraceError("trace too short for finite differences")
        return np.gradient(self.v, self.t)

    def write_csv(self, path):
        lines = ["t,x,v"]
        for tk, xk, vk in zip(self.t, self.x, self.v):
            lines.append(f"{tk:.10g},{xk:.10g},{vk:.10g}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def read_csv(cls, path, vehicle_id="", route_id=""):
        """Read a trace CSV; extra columns beyond t,x,v (a, P_b) are ignored."""
        path = Path(path)
        rows = path.read_text(encoding="utf-8").splitlines()
        header = rows[0].strip().lower().replace(" ", "") if rows else ""
        if not (header == "t,x,v" or header.startswith("t,x,v,")):
            raise TraceError(f"{path}: row 1: expected header 't,x,v'")
        n_cols = len(header.split(","))
        t, x, v = [], [], []
        for i, row in enumerate(rows[1:], start=2):
            if not row.strip():
                continue
            parts = row.split(",")
            if len(parts) != n_cols:
                raise TraceError(
                    f"{path}: row {i}: expected {n_cols} columns, got {len(parts)}")
            try:
                t.append(float(parts[0]))
                x.append(float(parts[1]))
                v.append(float(parts[2]))
            except ValueError:
                raise TraceError(f"{path}: row {i}: non-numeric value") from None
        try:
            return cls(np.array(t), np.array(x), np.array(v),
                       vehicle_id=vehicle_id, route_id=route_id)
        except TraceError as exc:
            raise TraceError(f"{path}: {exc}") from None


def traction_force(v, a, params, slope=0.0):
    """Traction force demanded at the wheels, no mechanical braking [N].

    At standstill (v = 0, a = 0) the demand is zero: a parked car exerts no
    traction, so the resistive terms only apply while rolling.
    """
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    f_a = 0.5 * params.air_density * params.drag_coeff * params.frontal_area * v * v
    f_r = params.mass * params.gravity * params.rolling_coeff * (v > 1e-9)
    f_g = params.mass * params.gravity * math.sin(slope) * (v > 1e-9)
    return params.mass * a + f_a + f_r + f_g


def sample_power(v, a, params, slope=0.0):
    """Battery power from the backward chain wheel -> motor -> battery [W].

    Torque at the motor is wheel force times wheel radius (single gear,
    ratio lumped), motor speed is v over wheel radius; regenerative power is
    clipped at the configured limit.
    """
    f_t = traction_force(v, a, params, slope)
    torque = f_t * params.wheel_radius
    omega = np.asarray(v) / params.wheel_radius
    p_m = params.motor_power_gain * torque * omega + params.torque_loss_coeff * torque * torque
    return np.maximum(p_m, -params.regen_power_limit)[()]


def trace_power(trace, params, slope=0.0):
    """Per-sample battery power of a recorded trace [W]."""
    return sample_power(trace.v, trace.accel(), params, slope)


def evaluate_trace_energy(trace, params, slope=0.0):
    """A-posteriori battery energy of a recorded trace [Wh].

    Accelerations come from finite differences of the recorded speed, power
    from the backward chain, and the result from trapezoidal integration.
    """
    if len(trace) < 2:
        raise TraceError("trace needs at least 2 samples for energy evaluation")
    p = trace_power(trace, params, slope)
    return float(np.trapezoid(p, trace.t)) / 3600.0


_FIELD_NAMES = None


def _param_fields():
    global _FIELD_NAMES
    if _FIELD_NAMES is None:
        _FIELD_NAMES = [f.name for f in fields(VehicleParams)]
    return _FIELD_NAMES


def load_vehicle_params(path) -> VehicleParams:
    """Read a flat `key = value` vehicle parameter file (SI units)."""
    path = Path(path)
    values = {}
    for i, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParamError(f"{path}: line {i}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _param_fields():
            raise ParamError(f"{path}: line {i}: unknown parameter '{key}'")
        try:
            values[key] = float(val.strip())
        except ValueError:
            raise ParamError(f"{path}: line {i}: non-numeric value for '{key}'") from None
    try:
        return VehicleParams(**values)
    except ParamError as exc:
        raise ParamError(f"{path}: {exc}") from None


def save_vehicle_params(params, path):
    """Write a vehicle parameter file readable by `load_vehicle_params`."""
    lines = [f"{name} = {getattr(params, name):.10g}" for name in _param_fields()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
