"""Deterministic closed-loop world simulation.

One scenario holds a route, per-light signal schedules, scripted lead
vehicles, and two driver configurations: an advised eco driver and an
aggressive baseline.  Both vehicles run the same world (same light phase
functions, same lead streams) in separate passes, never interacting with
each other.  Given the seed, a run is bit-identical.
"""

from __future__ import annotations

import configparser
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .advisor import CONSTRAINT_NONE, PerceptionFrame, SpeedAdvisor
from .errors import ScenarioError
from .routemap import FEATURE_LIGHT, FEATURE_STOP, Matcher, Route, parse_route
from .vehicle import (
    KinState,
    TripTrace,
    VehicleParams,
    evaluate_trace_energy,
    load_vehicle_params,
    sample_power,
)

ECO = "eco_advised"
BASELINE = "human_baseline"

# a trip is complete when the remaining distance drops below this [m]
COMPLETE_MARGIN = 1.0


@dataclass(frozen=True)
class LightSchedule:
    """Fixed-cycle signal: green for the leading fraction of every cycle."""

    cycle: float
    green_fraction: float
    offset: float = 0.0

    def __post_init__(self):
        if self.cycle <= 0:
            raise ScenarioError("light cycle must be > 0")
        if not 0.0 < self.green_fraction < 1.0:
            raise ScenarioError("green fraction must be in (0, 1)")

    def is_green(self, t) -> bool:
        return ((t - self.offset) % self.cycle) < self.green_fraction * self.cycle


@dataclass
class LeadScript:
    """Scripted lead trajectory along the route, linearly interpolated."""

    name: str
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if len(self.t) < 2 or np.any(np.diff(self.t) <= 0):
            raise ScenarioError(f"lead '{self.name}': need increasing timestamps")

    def state_at(self, time):
        """(position, speed) at `time`, or None outside the script window."""
        if time < self.t[0] or time > self.t[-1]:
            return None
        return (float(np.interp(time, self.t, self.x)),
                float(np.interp(time, self.t, self.v)))

    def write_csv(self, path):
        lines = ["t,x_l,v_l"]
        for tk, xk, vk in zip(self.t, self.x, self.v):
            lines.append(f"{tk:.10g},{xk:.10g},{vk:.10g}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def read_csv(cls, path, name=None):
        path = Path(path)
        rows = path.read_text(encoding="utf-8").splitlines()
        if not rows or rows[0].strip().replace(" ", "") != "t,x_l,v_l":
            raise ScenarioError(f"{path}: row 1: expected header 't,x_l,v_l'")
        cols = [[], [], []]
        for i, row in enumerate(rows[1:], start=2):
            if not row.strip():
                continue
            parts = row.split(",")
            if len(parts) != 3:
                raise ScenarioError(f"{path}: row {i}: expected 3 columns")
            try:
                for c, p in zip(cols, parts):
                    c.append(float(p))
            except ValueError:
                raise ScenarioError(f"{path}: row {i}: non-numeric value") from None
        return cls(name or path.stem, *map(np.array, cols))


@dataclass
class DriverConfig:
    """Driver behavior: tracking gain/delay for eco, aggressiveness for baseline."""

    kind: str = ECO
    gain: float = 0.5             # [1/s]
    delay: float = 1.0            # [s]
    aggressiveness: float = 2.5   # accel/decel the baseline is willing to use [m/s^2]

    def __post_init__(self):
        if self.kind not in (ECO, BASELINE):
            raise ScenarioError(f"unknown driver kind '{self.kind}'")
        if self.gain <= 0 or self.delay < 0 or self.aggressiveness <= 0:
            raise ScenarioError("driver gains must be positive, delay non-negative")


@dataclass
class SensorConfig:
    """Sampling rates and ranges of the perception/localization stack."""

    perception_hz: float = 3.0
    advisory_hz: float = 1.0
    gps_hz: float = 1.15
    detect_range: float = 50.0
    light_miss_prob: float = 0.0
    gps_noise: float = 0.0
    lead_clearance: float = 6.0   # lead length + minimum spacing, lumped [m]
    hd_sight: float = 150.0       # how far the baseline driver reads lights [m]
    hd_lead_range: float = 120.0


@dataclass
class Scenario:
    """Everything one closed-loop comparison run needs."""

    name: str
    route: Route
    lights: dict = field(default_factory=dict)        # link_id -> LightSchedule
    leads: list = field(default_factory=list)         # [LeadScript]
    ed: DriverConfig = field(default_factory=lambda: DriverConfig(kind=ECO))
    hd: DriverConfig = field(default_factory=lambda: DriverConfig(kind=BASELINE))
    params: VehicleParams = field(default_factory=VehicleParams)
    dt: float = 0.05
    seed: int = 0
    sensors: SensorConfig = field(default_factory=SensorConfig)

    def validate(self):
        if self.route is None or len(self.route) == 0:
            raise ScenarioError("scenario needs a non-empty route")
        if not 0.0 < self.dt <= 0.5:
            raise ScenarioError("dt must be in (0, 0.5]")
        for link in self.route.links:
            if link.end_feature == FEATURE_LIGHT and link.link_id not in self.lights:
                raise ScenarioError(f"no light schedule for link {link.link_id}")
        return self

    def light_positions(self):
        out = []
        for i, link in enumerate(self.route.links):
            if link.end_feature == FEATURE_LIGHT:
                out.append((float(self.route.starts[i + 1]),
                            self.lights[link.link_id], link.link_id))
        return out

    def stop_positions(self):
        return [float(self.route.starts[i + 1])
                for i, link in enumerate(self.route.links)
                if link.end_feature == FEATURE_STOP]


@dataclass
class AdvisoryRecord:
    t: float
    target_speed: float
    active_constraint: str
    horizon: float
    distance: float
    final_speed: float


@dataclass
class VehicleRun:
    """One vehicle's pass through the scenario."""

    trace: TripTrace
    accel: np.ndarray      # commanded acceleration per sample [m/s^2]
    power: np.ndarray      # backward-chain battery power per sample [W]
    advisories: list
    events: list
    trip_time: float
    energy_wh: float


@dataclass
class SimResult:
    scenario: str
    runs: dict

    def __getitem__(self, key):
        return self.runs[key]


def nearest_lead_ahead(leads, t, s):
    """(position, speed) of the closest scripted lead at or ahead of s."""
    best = None
    for script in leads:
        state = script.state_at(t)
        if state is None:
            continue
        x_l, v_l = state
        if x_l >= s and (best is None or x_l < best[0]):
            best = (x_l, v_l)
    return best


def sample_perception(t, s, v, lights, lead, sensors, rng) -> PerceptionFrame:
    """One camera frame: nearest light phase and net lead gap within range.

    A missed light detection (probability `light_miss_prob`) or no light in
    range reports green by default.
    """
    red = False
    green = True
    nearest = None
    for pos, schedule, _ in lights:
        d = pos - s
        if -2.0 <= d <= sensors.detect_range and (nearest is None or d < nearest[0]):
            nearest = (d, schedule)
    if nearest is not None:
        missed = sensors.light_miss_prob > 0.0 and rng.random() < sensors.light_miss_prob
        if not missed:
            green = nearest[1].is_green(t)
            red = not green
    gap = rel_speed = None
    if lead is not None:
        d = lead[0] - s
        if 0.0 <= d <= sensors.detect_range:
            gap = d - sensors.lead_clearance
            rel_speed = lead[1] - v
    return PerceptionFrame(timestamp=t, gap=gap, rel_speed=rel_speed,
                           red=red, green=green)


def eco_driver_accel(advised, current, cfg, accel_limit=3.0):
    """First-order tracking of the advised speed, saturated symmetrically."""
    return float(np.clip(cfg.gain * (advised - current), -accel_limit, accel_limit))


class BaselineDriver:
    """Aggressive rule-based driver: full throttle to the limit, late braking.

    Braking for red lights and stop signs starts at the latest comfortable
    point (constant-deceleration envelope at 80% of the configured
    aggressiveness); gap keeping behind a lead follows the usual intelligent
    driver model shape.
    """

    STOP_MARGIN = 0.5
    DWELL = 2.0

    def __init__(self, cfg, scenario):
        self.cfg = cfg
        self.route = scenario.route
        self.sensors = scenario.sensors
        self.dt = scenario.dt
        self.accel_limit = scenario.params.accel_limit
        self.lights = scenario.light_positions()
        self.stops = scenario.stop_positions()
        self.plan_decel = 0.8 * cfg.aggressiveness
        self._passed_stops = set()
        self._dwell_until = None

    def _allowed_speed(self, target_pos, target_speed, s):
        d = max(target_pos - s, 0.0)
        return math.sqrt(target_speed * target_speed + 2.0 * self.plan_decel * d)

    def accel(self, t, s, v, lead=None) -> float:
        sensors = self.sensors
        i, _ = self.route.locate(min(s, self.route.total_length - 1e-6))
        v_limit = self.route.links[i].v_max
        a = min(self.cfg.aggressiveness, (v_limit - v) / self.dt)

        # envelope for upcoming lower speed limits
        for j in range(i + 1, len(self.route.links)):
            boundary = float(self.route.starts[j])
            if boundary - s > sensors.hd_sight:
                break
            nxt = self.route.links[j].v_max
            if nxt < v:
                allowed = self._allowed_speed(boundary, nxt, s)
                a = min(a, (allowed - v) / self.dt)

        # stop targets: red lights right now, unpassed stop signs
        stop_at = None
        for pos, schedule, _ in self.lights:
            d = pos - s
            if -0.5 <= d <= sensors.hd_sight and not schedule.is_green(t):
                required = v * v / (2.0 * max(d - self.STOP_MARGIN, 0.3))
                if required <= 1.5 * self.cfg.aggressiveness:
                    stop_at = pos if stop_at is None else min(stop_at, pos)
        for pos in self.stops:
            if pos in self._passed_stops:
                continue
            d = pos - s
            if d < -0.5:
                self._passed_stops.add(pos)
            elif d <= sensors.hd_sight:
                stop_at = pos if stop_at is None else min(stop_at, pos)

        if stop_at is not None:
            d = stop_at - s
            if v < 0.05 and d < 3.0:
                # waiting at the line: a red clears itself on green, a stop
                # sign clears after the dwell
                if any(abs(stop_at - p) < 0.5 for p in self.stops
                       if p not in self._passed_stops):
                    if self._dwell_until is None:
                        self._dwell_until = t + self.DWELL
                    elif t >= self._dwell_until:
                        self._passed_stops.add(stop_at)
                        self._dwell_until = None
                a = min(a, 0.0)
            else:
                allowed = self._allowed_speed(stop_at - self.STOP_MARGIN, 0.0, s)
                a = min(a, (allowed - v) / self.dt)

        if lead is not None:
            d = lead[0] - s
            if 0.0 <= d <= sensors.hd_lead_range:
                gap = d - sensors.lead_clearance
                if gap < 0.5:
                    a = -self.accel_limit
                else:
                    # headway shrinks with aggressiveness: tailgating drivers
                    # surge and brake late behind varying traffic
                    b = self.cfg.aggressiveness
                    headway = max(0.5, 1.6 - 0.4 * self.cfg.aggressiveness)
                    s_star = (2.0 + headway * v
                              + v * max(v - lead[1], 0.0) / (2.0 * math.sqrt(self.cfg.aggressiveness * b)))
                    a_idm = self.cfg.aggressiveness * (
                        1.0 - (v / max(v_limit, 0.1)) ** 4 - (s_star / gap) ** 2)
                    a = min(a, a_idm)

        return float(np.clip(a, -self.accel_limit, self.cfg.aggressiveness))


def baseline_driver_accel(driver: BaselineDriver, t, s, v, lead=None) -> float:
    """Functional wrapper over the stateful baseline driver."""
    return driver.accel(t, s, v, lead)


class _EcoReflexes:
    """Human reflexes layered under the advisory: emergency brake and creep.

    The advisory owns the plan; the driver only overrides it to avoid a
    collision or to roll the last meters up to a line after a full stop (a
    terminal-speed-zero advisory decays to zero target before the boundary
    is crossed).
    """

    CREEP_ACCEL = 0.4
    CREEP_SPEED = 1.0
    CREEP_WAIT = 1.5

    def __init__(self, scenario):
        self.sensors = scenario.sensors
        self.accel_limit = scenario.params.accel_limit
        self.lights = scenario.light_positions()
        self.total = scenario.route.total_length
        self._stopped_since = None

    def apply(self, a, t, s, v, target, lead):
        if lead is not None:
            gap = lead[0] - s - self.sensors.lead_clearance
            closing = v - lead[1]
            if gap < 0.5:
                return -self.accel_limit
            if closing > 0.0:
                # decelerate when closing on the lead would soon demand more
                # braking than the car has
                need = closing * closing / (2.0 * max(gap - 1.0, 0.5))
                if need >= 2.0 or gap / closing < 1.2:
                    return -float(np.clip(1.25 * need, 2.0, self.accel_limit))
            if gap < 12.0:
                # close behind a slow lead nobody chases a higher advisory;
                # settle at the lead's pace, matching it at ~6 m net gap
                follow_cap = lead[1] + 0.3 * (gap - 6.0)
                a = min(a, float(np.clip(0.5 * (follow_cap - v),
                                         -2.0, self.accel_limit)))
        if v < 0.1:
            if self._stopped_since is None:
                self._stopped_since = t
        else:
            self._stopped_since = None
        if (self._stopped_since is not None
                and t - self._stopped_since >= self.CREEP_WAIT
                and target < 0.5
                and self.total - s > COMPLETE_MARGIN):
            red_near = any(0.0 <= pos - s <= 30.0 and not sched.is_green(t)
                           for pos, sched, _ in self.lights)
            lead_near = (lead is not None
                         and lead[0] - s - self.sensors.lead_clearance < 8.0)
            if not red_near and not lead_near:
                return min(self.CREEP_ACCEL, (self.CREEP_SPEED - v) / 1.0)
        return a


def _integrate(s, v, a, dt):
    """Exact zero-order-hold step, stopping at v = 0 instead of reversing."""
    v_next = v + a * dt
    if v_next < 0.0 and a < 0.0:
        t_stop = v / -a
        return s + v * t_stop + 0.5 * a * t_stop * t_stop, 0.0
    return s + v * dt + 0.5 * a * dt * dt, max(v_next, 0.0)


def _simulate_vehicle(scenario, driver_cfg) -> VehicleRun:
    route = scenario.route
    sensors = scenario.sensors
    params = scenario.params
    dt = scenario.dt
    total = route.total_length
    rng = np.random.default_rng(scenario.seed)
    t_max = 3.0 * route.total_duration + 300.0

    eco = driver_cfg.kind == ECO
    advisories = []
    events = []
    log_t, log_x, log_v, log_a = [], [], [], []

    if eco:
        advisor = SpeedAdvisor()
        matcher = Matcher(route)
        reflexes = _EcoReflexes(scenario)
        lights = scenario.light_positions()
        pedal_hist = deque()   # (t, advised, speed) pairs feeding the delayed law
        fix = None
        target = 0.0
        next_gps = 0.0
        next_perc = 0.0
        next_adv = 0.0
        last_constraint = CONSTRAINT_NONE
    else:
        driver = BaselineDriver(driver_cfg, scenario)

    s, v, t = 0.0, 0.0, 0.0
    while total - s > COMPLETE_MARGIN:
        if t > t_max:
            raise ScenarioError(
                f"{scenario.name}: {driver_cfg.kind} did not finish within {t_max:.0f} s")
        lead = nearest_lead_ahead(scenario.leads, t, s)

        if eco:
            if t >= next_gps - 1e-9:
                point = np.asarray(route.point_at(s), dtype=float)
                if sensors.gps_noise > 0.0:
                    point = point + rng.normal(0.0, sensors.gps_noise, size=2)
                fix = matcher.match(point, t)
                next_gps += 1.0 / sensors.gps_hz
            if t >= next_perc - 1e-9:
                frame = sample_perception(t, s, v, lights, lead, sensors, rng)
                advisor.observe(frame, v)
                next_perc += 1.0 / sensors.perception_hz
            if t >= next_adv - 1e-9:
                link = route.links[fix.link_index]
                ego = KinState(min(fix.x, link.length - 0.01), v, t)
                out = advisor.step(ego, link)
                target = out.target_speed
                advisories.append(AdvisoryRecord(
                    t, out.target_speed, out.active_constraint,
                    out.bc.horizon, out.bc.distance, out.bc.final_speed))
                if out.active_constraint != last_constraint:
                    events.append(f"t={t:.2f} constraint {out.active_constraint}")
                    last_constraint = out.active_constraint
                next_adv += 1.0 / sensors.advisory_hz
            pedal_hist.append((t, target, v))
            while len(pedal_hist) > 1 and pedal_hist[1][0] <= t - driver_cfg.delay:
                pedal_hist.popleft()
            if pedal_hist[0][0] <= t - driver_cfg.delay + 1e-9:
                _, advised, seen = pedal_hist[0]
            else:
                advised = seen = 0.0   # driver has not reacted yet
            a = eco_driver_accel(advised, seen, driver_cfg,
                                 accel_limit=params.accel_limit)
            a = reflexes.apply(a, t, s, v, target, lead)
        else:
            a = driver.accel(t, s, v, lead)

        log_t.append(t)
        log_x.append(s)
        log_v.append(v)
        log_a.append(a)
        s, v = _integrate(s, v, a, dt)
        t += dt

    log_t.append(t)
    log_x.append(s)
    log_v.append(v)
    log_a.append(0.0)
    trace = TripTrace(np.array(log_t), np.array(log_x), np.array(log_v),
                      vehicle_id=driver_cfg.kind, route_id=scenario.name)
    accel = np.array(log_a)
    power = np.asarray(sample_power(trace.v, accel, params))
    energy = evaluate_trace_energy(trace, params)
    return VehicleRun(trace=trace, accel=accel, power=power, advisories=advisories,
                      events=events, trip_time=t, energy_wh=energy)


def run_scenario(scenario: Scenario) -> SimResult:
    """Run the eco-advised and baseline vehicles through the same world."""
    scenario.validate()
    runs = {
        "ed": _simulate_vehicle(scenario, scenario.ed),
        "hd": _simulate_vehicle(scenario, scenario.hd),
    }
    return SimResult(scenario=scenario.name, runs=runs)


def write_scenario(scenario, directory, route_filename="route.txt"):
    """Write a scenario directory: ini file, route file, lead scripts."""
    from .routemap import write_route

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_route(scenario.route, directory / route_filename)
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["scenario"] = {
        "name": scenario.name,
        "route": route_filename,
        "dt": f"{scenario.dt:.10g}",
        "seed": str(scenario.seed),
    }
    cp["sensors"] = {
        "perception_hz": f"{scenario.sensors.perception_hz:.10g}",
        "advisory_hz": f"{scenario.sensors.advisory_hz:.10g}",
        "gps_hz": f"{scenario.sensors.gps_hz:.10g}",
        "detect_range": f"{scenario.sensors.detect_range:.10g}",
        "light_miss_prob": f"{scenario.sensors.light_miss_prob:.10g}",
        "gps_noise": f"{scenario.sensors.gps_noise:.10g}",
        "lead_clearance": f"{scenario.sensors.lead_clearance:.10g}",
    }
    cp["lights"] = {
        link_id: f"{sch.cycle:.10g}, {sch.green_fraction:.10g}, {sch.offset:.10g}"
        for link_id, sch in scenario.lights.items()
    }
    leads = {}
    for i, script in enumerate(scenario.leads):
        fname = f"lead_{script.name or i}.csv"
        script.write_csv(directory / fname)
        leads[script.name or f"lead{i}"] = fname
    cp["leads"] = leads
    cp["driver.ed"] = {"gain": f"{scenario.ed.gain:.10g}",
                       "delay": f"{scenario.ed.delay:.10g}"}
    cp["driver.hd"] = {"aggressiveness": f"{scenario.hd.aggressiveness:.10g}"}
    path = directory / "scenario.ini"
    with open(path, "w", encoding="utf-8") as fh:
        cp.write(fh)
    return path


def parse_scenario(path, params: VehicleParams = None) -> Scenario:
    """Read a scenario ini file; referenced paths resolve next to it."""
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    base = path.parent
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    if "scenario" not in cp:
        raise ScenarioError(f"{path}: missing [scenario] section")
    sec = cp["scenario"]
    route_file = sec.get("route")
    if not route_file:
        raise ScenarioError(f"{path}: missing route file reference")
    route_path = base / route_file
    if not route_path.exists():
        raise ScenarioError(f"{path}: route file not found: {route_path}")
    route = parse_route(route_path)

    sensors = SensorConfig()
    if "sensors" in cp:
        kw = {k: float(val) for k, val in cp["sensors"].items()}
        sensors = SensorConfig(**kw)

    lights = {}
    if "lights" in cp:
        for link_id, val in cp["lights"].items():
            parts = [p.strip() for p in val.split(",")]
            if len(parts) != 3:
                raise ScenarioError(
                    f"{path}: light '{link_id}' needs 'cycle, green_fraction, offset'")
            lights[link_id] = LightSchedule(float(parts[0]), float(parts[1]),
                                            float(parts[2]))

    leads = []
    if "leads" in cp:
        for name, fname in cp["leads"].items():
            lead_path = base / fname
            if not lead_path.exists():
                raise ScenarioError(f"{path}: lead script not found: {lead_path}")
            leads.append(LeadScript.read_csv(lead_path, name=name))

    ed = DriverConfig(kind=ECO)
    if "driver.ed" in cp:
        d = cp["driver.ed"]
        ed = DriverConfig(kind=ECO, gain=d.getfloat("gain", 0.3),
                          delay=d.getfloat("delay", 1.0))
    hd = DriverConfig(kind=BASELINE)
    if "driver.hd" in cp:
        d = cp["driver.hd"]
        hd = DriverConfig(kind=BASELINE,
                          aggressiveness=d.getfloat("aggressiveness", 2.5))

    if params is None:
        if "vehicle" in cp and cp["vehicle"].get("file"):
            params = load_vehicle_params(base / cp["vehicle"]["file"])
        else:
            params = VehicleParams()

    return Scenario(
        name=sec.get("name", path.stem),
        route=route,
        lights=lights,
        leads=leads,
        ed=ed,
        hd=hd,
        params=params,
        dt=sec.getfloat("dt", 0.05),
        seed=sec.getint("seed", 0),
        sensors=sensors,
    ).validate()
