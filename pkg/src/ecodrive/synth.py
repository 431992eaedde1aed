"""Synthetic urban routes and scenario suites for closed-loop experiments.

The flagship route is a 2.3 km corridor with nine traffic lights, a 30 km/h
zone, a 40 km/h stretch, a couple of deliberately tiny links (aggregation
fodder), and a stop-sign destination.  Scenario variants differ in signal
timing and scripted surrounding traffic.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .routemap import (
    FEATURE_LIGHT,
    FEATURE_NONE,
    FEATURE_SPEED,
    FEATURE_STOP,
    Link,
    Route,
    TangentPlane,
    aggregate_links,
)
from .sim import (
    BASELINE,
    ECO,
    BaselineDriver,
    DriverConfig,
    LeadScript,
    LightSchedule,
    Scenario,
    _integrate,
    write_scenario,
)
from .vehicle import KMH, VehicleParams

ANCHOR = (48.8700, 2.1800)

# (length [m], v_max [km/h], end feature); nine lights, stop-sign destination
URBAN_SEGMENTS = [
    (110.0, 50.0, FEATURE_NONE),
    (40.0, 50.0, FEATURE_NONE),
    (60.0, 50.0, FEATURE_LIGHT),     # light 1 @ 210 m
    (240.0, 50.0, FEATURE_LIGHT),    # light 2 @ 450 m
    (250.0, 50.0, FEATURE_LIGHT),    # light 3 @ 700 m (30 zone starts)
    (240.0, 30.0, FEATURE_LIGHT),    # light 4 @ 940 m
    (250.0, 30.0, FEATURE_LIGHT),    # light 5 @ 1190 m (30 zone ends)
    (270.0, 50.0, FEATURE_LIGHT),    # light 6 @ 1460 m
    (120.0, 50.0, FEATURE_SPEED),    # 40 zone starts @ 1580 m
    (150.0, 40.0, FEATURE_LIGHT),    # light 7 @ 1730 m
    (255.0, 40.0, FEATURE_LIGHT),    # light 8 @ 1985 m (back to 50)
    (175.0, 50.0, FEATURE_LIGHT),    # light 9 @ 2160 m
    (140.0, 50.0, FEATURE_STOP),     # destination stop @ 2300 m
]

# planned link pace as a fraction of the speed limit; sets the schedule the
# advisor tries to hold (calibrated so the plan matches the baseline's
# realized moving pace on this corridor)
PLAN_PACE = 0.84
# schedule slack added per signalized link end for expected waiting [s]
LIGHT_SLACK = 0.0


def _centerline(total_length, step=20.0):
    """Gently curving planar centerline of the requested length."""
    n = int(math.ceil(total_length / step)) + 1
    pts = np.zeros((n, 2))
    heading = 0.0
    for k in range(1, n):
        heading = 0.25 * math.sin(k / 6.0)
        d = min(step, total_length - (k - 1) * step)
        pts[k] = pts[k - 1] + d * np.array([math.cos(heading), math.sin(heading)])
    return pts


def _arc_positions(pts):
    seg = np.hypot(*np.diff(pts, axis=0).T)
    return np.concatenate([[0.0], np.cumsum(seg)])


def _slice_polyline(pts, arc, a, b):
    """Vertices of the centerline between arc positions a and b, inclusive."""
    out = [np.array([np.interp(a, arc, pts[:, 0]), np.interp(a, arc, pts[:, 1])])]
    for p, s in zip(pts, arc):
        if a + 1e-9 < s < b - 1e-9:
            out.append(p)
    out.append(np.array([np.interp(b, arc, pts[:, 0]), np.interp(b, arc, pts[:, 1])]))
    return np.array(out)


def make_urban_route(segments=None, aggregate=True) -> Route:
    """Build the synthetic signalized corridor as a Route."""
    segments = segments or URBAN_SEGMENTS
    total = sum(d for d, _, _ in segments)
    plane = TangentPlane(*ANCHOR)
    pts = _centerline(total)
    arc = _arc_positions(pts)
    links = []
    s = 0.0
    for i, (length, vmax_kmh, feature) in enumerate(segments):
        v_max = vmax_kmh * KMH
        planar = _slice_polyline(pts, arc, s, s + length)
        seg_len = float(np.sum(np.hypot(*np.diff(planar, axis=0).T)))
        geo = np.array([plane.to_geodetic(x, y) for x, y in planar])
        duration = seg_len / (PLAN_PACE * v_max)
        if feature == FEATURE_LIGHT:
            duration += LIGHT_SLACK
        if feature == FEATURE_STOP:
            final = 0.0
        else:
            # the predicted exit speed must be drivable on the next link too;
            # the margin absorbs the driver's tracking lag at zone entries
            next_vmax = segments[i + 1][1] * KMH if i + 1 < len(segments) else v_max
            final = min(0.8 * v_max, 0.95 * next_vmax)
        links.append(Link(
            link_id=f"L{i + 1}",
            polyline=geo,
            v_max=v_max,
            length=seg_len,
            duration=duration,
            final_speed=final,
            end_feature=feature,
        ))
        s += length
    if aggregate:
        links = aggregate_links(links)
    return Route(links, origin=ANCHOR)


def make_lead_script(route, lights, start_s, aggressiveness=1.8,
                     params=None, dt=0.1, name="lead") -> LeadScript:
    """Scripted lead: a gentle baseline driver run solo from `start_s`."""
    params = params or VehicleParams()
    scenario = Scenario(name="lead-gen", route=route, lights=lights,
                        hd=DriverConfig(kind=BASELINE, aggressiveness=aggressiveness),
                        params=params, dt=dt)
    driver = BaselineDriver(scenario.hd, scenario)
    t, s, v = 0.0, float(start_s), 0.0
    ts, xs, vs = [t], [s], [v]
    t_max = 3.0 * route.total_duration + 300.0
    while s < route.total_length - 0.5 and t < t_max:
        a = driver.accel(t, s, v, None)
        s, v = _integrate(s, v, a, dt)
        t += dt
        ts.append(t)
        xs.append(s)
        vs.append(v)
    return LeadScript(name, np.array(ts), np.array(xs), np.array(vs))


def make_scenario(index: int, route=None, params=None) -> Scenario:
    """One of the nine standard scenario variants (index 1..9).

    Signal offsets follow the planned cumulative arrival times (a green wave
    at the corridor's plan pace); scenarios shift the whole wave so arrivals
    land anywhere from well inside the green to just after it.
    """
    params = params or VehicleParams()
    route = route or make_urban_route()
    cycle = 40.0 + 1.0 * index
    green = 0.60
    launch_penalty = 6.0   # time lost accelerating from the start line [s]
    wave_shift = 3.0 * (index - 3)
    lights = {}
    planned = launch_penalty
    for i, link in enumerate(route.links):
        planned += link.duration
        if link.end_feature != FEATURE_LIGHT:
            continue
        offset = (planned - 0.25 * green * cycle + wave_shift) % cycle
        lights[link.link_id] = LightSchedule(cycle=cycle, green_fraction=green,
                                             offset=offset)
    leads = []
    if index % 3 == 2:
        leads.append(make_lead_script(
            route, lights, start_s=100.0 + 10.0 * (index - 2),
            aggressiveness=2.3, params=params,
            name=f"lead{index}"))
    return Scenario(
        name=f"urban9-{index}",
        route=route,
        lights=lights,
        leads=leads,
        ed=DriverConfig(kind=ECO, gain=0.5, delay=1.0),
        hd=DriverConfig(kind=BASELINE, aggressiveness=2.5),
        params=params,
        dt=0.05,
        seed=index,
    ).validate()


def scenario_suite(n=9, route=None, params=None):
    """The standard nine-variant suite over the shared urban route."""
    route = route or make_urban_route()
    params = params or VehicleParams()
    return [make_scenario(k, route=route, params=params) for k in range(1, n + 1)]


def main(argv=None):
    """Write scenario directories for the standard suite."""
    import argparse

    parser = argparse.ArgumentParser(
        prog="ecodrive-synth",
        description="generate the synthetic nine-light scenario suite")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--count", type=int, default=9)
    args = parser.parse_args(argv)
    out = Path(args.out)
    for sc in scenario_suite(args.count):
        path = write_scenario(sc, out / sc.name)
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
