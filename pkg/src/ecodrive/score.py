"""Post-trip analysis: breakpoints, reconstructed optimal reference, scoring.

A driven trace is anchored at breakpoints (route features plus prominent
speed minima caused by traffic), the energy-optimal profile is rebuilt
between consecutive anchors under the recorded timing, and the score is the
relative excess energy of the driven trace over that reference.  Zero is a
perfect score; negatives are reported as-is.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .errors import TraceError
from .ocp import BoundaryConditions, solve_unconstrained
from .vehicle import TripTrace, evaluate_trace_energy

KIND_PLANNED = "planned"
KIND_TRAFFIC = "traffic"

PROMINENCE_MIN = 2.0     # speed-minimum prominence threshold [m/s]
MERGE_RADIUS = 20.0      # minima this close to a planned anchor fold into it [m]
COMPLETE_SLACK = 1.0     # how short of the route end a complete trace may stop [m]


@dataclass(frozen=True)
class Breakpoint:
    """Anchor sample of the reference profile (always an actual trace sample)."""

    x: float
    t: float
    v: float
    kind: str


@dataclass
class SegmentReport:
    start: Breakpoint
    end: Breakpoint
    clipped: bool


@dataclass
class EdsReport:
    """Energy of the driven and reference traces and the resulting score."""

    trip: str
    driven_wh: float
    reference_wh: float
    score: float
    segments: list = field(default_factory=list)


@dataclass
class TripComparison:
    energy_gain_pct: float
    delta_avg_speed_pct: float
    ed: EdsReport
    hd: EdsReport


def detect_breakpoints(trace: TripTrace, route, prominence_min=PROMINENCE_MIN,
                       merge_radius=MERGE_RADIUS):
    """Planned anchors (route features, trip ends) plus prominent speed minima.

    Traffic minima within `merge_radius` of a planned anchor merge into it.
    Every breakpoint is an actual trace sample, so consecutive anchors carry
    exact distance and time deltas.
    """
    if trace.x[-1] < route.total_length - 2.0 * COMPLETE_SLACK:
        raise TraceError(
            f"trace covers {trace.x[-1]:.1f} m of a {route.total_length:.1f} m route")
    planned_idx = [0, len(trace) - 1]
    for pos, _, _ in route.feature_positions():
        if pos <= trace.x[0] or pos >= trace.x[-1]:
            continue
        planned_idx.append(int(np.argmin(np.abs(trace.x - pos))))
    planned_idx = sorted(set(planned_idx))

    minima, _ = find_peaks(-trace.v, prominence=prominence_min)
    traffic_idx = [int(k) for k in minima
                   if all(abs(trace.x[k] - trace.x[p]) > merge_radius
                          for p in planned_idx)]

    points = [(k, KIND_PLANNED) for k in planned_idx]
    points += [(k, KIND_TRAFFIC) for k in traffic_idx]
    points.sort()
    out = []
    for k, kind in points:
        bp = Breakpoint(float(trace.x[k]), float(trace.t[k]), float(trace.v[k]), kind)
        if out and (bp.x <= out[-1].x + 1e-9 or bp.t <= out[-1].t + 1e-9):
            continue
        out.append(bp)
    return out


def optimal_reference(trace: TripTrace, breakpoints, params, route=None):
    """Reference trace: optimal profile between consecutive anchors.

    Each segment keeps the observed boundary speeds, distance, and duration.
    The segment horizon is fixed by observation and cannot be stretched, so
    where the profile would exceed the local speed limit (or dip below
    standstill) the reference speed is clipped and the segment flagged; its
    distance then falls short and the next anchor re-synchronizes.

    Returns (reference TripTrace, [SegmentReport]).
    """
    if len(breakpoints) < 2:
        raise TraceError("need at least two breakpoints")
    ts, xs, vs = [], [], []
    reports = []
    for start, end in zip(breakpoints, breakpoints[1:]):
        dx = end.x - start.x
        dt = end.t - start.t
        if dx <= 0 or dt <= 0:
            raise TraceError(
                f"degenerate segment between x={start.x:.1f} and x={end.x:.1f}")
        bc = BoundaryConditions(start.v, end.v, dx, dt)
        prof = solve_unconstrained(bc)
        inner = trace.t[(trace.t > start.t + 1e-12) & (trace.t < end.t - 1e-12)]
        t_seg = np.concatenate([[start.t], inner, [end.t]])
        tau = t_seg - start.t
        v_raw = prof.speed(tau)
        v_ref = np.maximum(v_raw, 0.0)
        clipped = bool(np.any(v_raw < -1e-9))
        if route is not None:
            x_probe = start.x + np.clip(prof.position(tau), 0.0, None)
            limits = np.array([route.speed_limit_at(min(x, route.total_length - 1e-9))
                               for x in x_probe])
            if np.any(v_ref > limits + 1e-9):
                clipped = True
                v_ref = np.minimum(v_ref, limits)
        if clipped:
            x_ref = start.x + np.concatenate(
                [[0.0], np.cumsum(0.5 * (v_ref[1:] + v_ref[:-1]) * np.diff(tau))])
        else:
            x_ref = start.x + prof.position(tau)
            x_ref[-1] = end.x
        x_ref[0], v_ref[0] = start.x, start.v
        v_ref[-1] = end.v
        skip = 1 if ts else 0
        ts.extend(t_seg[skip:])
        xs.extend(x_ref[skip:])
        vs.extend(v_ref[skip:])
        reports.append(SegmentReport(start, end, clipped))
    # stitching keeps anchors exact: clipped segments fall short, never long
    xs = np.maximum.accumulate(np.asarray(xs))
    ref = TripTrace(np.asarray(ts), xs, np.asarray(vs),
                    vehicle_id=(trace.vehicle_id + "-reference").lstrip("-"),
                    route_id=trace.route_id)
    return ref, reports


def eds(driven_energy: float, reference_energy: float) -> float:
    """Relative excess energy of the driven trace over its reference."""
    if reference_energy <= 0:
        raise ValueError("reference energy must be positive")
    return (driven_energy - reference_energy) / reference_energy


def score_trip(trace: TripTrace, route, params, trip="trip",
               prominence_min=PROMINENCE_MIN, merge_radius=MERGE_RADIUS):
    """Full post-trip scoring: breakpoints, reference, energies, score."""
    breakpoints = detect_breakpoints(trace, route, prominence_min, merge_radius)
    reference, segments = optimal_reference(trace, breakpoints, params, route)
    driven_wh = evaluate_trace_energy(trace, params)
    reference_wh = evaluate_trace_energy(reference, params)
    report = EdsReport(trip=trip, driven_wh=driven_wh, reference_wh=reference_wh,
                       score=eds(driven_wh, reference_wh), segments=segments)
    return report, reference, breakpoints


def compare_trips(ed_trace: TripTrace, hd_trace: TripTrace, params, route,
                  trip="trip") -> TripComparison:
    """Head-to-head comparison of the advised and baseline trips."""
    for name, tr in (("ed", ed_trace), ("hd", hd_trace)):
        if tr.x[-1] < route.total_length - 2.0 * COMPLETE_SLACK:
            raise TraceError(f"{name} trace does not cover the route")
    e_ed = evaluate_trace_energy(ed_trace, params)
    e_hd = evaluate_trace_energy(hd_trace, params)
    gain = (e_hd - e_ed) / e_hd * 100.0
    dv = (ed_trace.mean_speed - hd_trace.mean_speed) / hd_trace.mean_speed * 100.0
    ed_report, _, _ = score_trip(ed_trace, route, params, trip=f"{trip}-ed")
    hd_report, _, _ = score_trip(hd_trace, route, params, trip=f"{trip}-hd")
    return TripComparison(energy_gain_pct=gain, delta_avg_speed_pct=dv,
                          ed=ed_report, hd=hd_report)
