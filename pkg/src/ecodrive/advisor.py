"""Shrinking-horizon speed advisor.

Each tick rebuilds the boundary conditions from the remaining link distance
and schedule, picks the terminal speed from the traffic-light state and the
link attributes, validates the closed-form profile against the speed limit
and the predicted lead motion, stretches the horizon when needed, and emits
the advised speed three seconds into the profile.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .errors import EcoDriveError, InfeasibleConstraint, InfeasibleHorizon
from .ocp import (
    BoundaryConditions,
    LeadState,
    SpeedProfile,
    adjust_horizon,
    lead_gap_margin,
    solve_unconstrained,
)
from .routemap import FEATURE_LIGHT, FEATURE_STOP
from .vehicle import KinState

# the display leads the profile to absorb the driver's reaction time [s]
PREVIEW_TIME = 3.0
# below this remaining horizon a re-plan is numerically meaningless [s]
HORIZON_FLOOR = 0.5

CONSTRAINT_NONE = "none"
CONSTRAINT_VMAX = "vmax"
CONSTRAINT_LEAD = "lead"
CONSTRAINT_FALLBACK = "infeasible-fallback"


class LinkTransition(EcoDriveError):
    """The ego position is past the link end; the caller must advance links."""


@dataclass(frozen=True)
class PerceptionFrame:
    """One camera sample: net lead gap/relative speed and light booleans.

    `gap` is net of the lead length and the minimum spacing; None means no
    lead within range.  A missed light detection reports green, so `green`
    defaults to True and red and green are never both set.
    """

    timestamp: float
    gap: float | None = None
    rel_speed: float | None = None
    red: bool = False
    green: bool = True

    def __post_init__(self):
        if self.red and self.green:
            raise ValueError("a light cannot be red and green at once")
        if (self.gap is None) != (self.rel_speed is None):
            raise ValueError("gap and rel_speed must be present together")

    @property
    def has_lead(self) -> bool:
        return self.gap is not None


class LeadHistory:
    """Ring buffer of recent lead-speed samples with a weighted-average slope.

    Keeps the last `capacity` (timestamp, speed) pairs.  The acceleration
    estimate averages the per-pair finite differences with exponentially
    decaying weights (most recent pair weighted 1), which suppresses the
    sample noise that makes raw differencing erratic.  `mode` selects whether
    the differences or the speeds are smoothed first.
    """

    def __init__(self, capacity=6, weight=0.95, mode="diff_then_smooth"):
        if capacity < 2:
            raise ValueError("capacity must be at least 2")
        if mode not in ("diff_then_smooth", "smooth_then_diff"):
            raise ValueError(f"unknown mode '{mode}'")
        self.capacity = capacity
        self.weight = weight
        self.mode = mode
        self._samples = deque(maxlen=capacity)

    def __len__(self):
        return len(self._samples)

    def clear(self):
        self._samples.clear()

    def push(self, timestamp, speed):
        if self._samples and timestamp <= self._samples[-1][0]:
            raise ValueError("timestamps must be strictly increasing")
        self._samples.append((timestamp, speed))

    @property
    def has_estimate(self) -> bool:
        return len(self._samples) >= 2

    def accel_estimate(self) -> float:
        """Weighted-average lead acceleration; 0 before two samples exist."""
        if not self.has_estimate:
            return 0.0
        samples = list(self._samples)
        if self.mode == "smooth_then_diff":
            smoothed = []
            for k in range(len(samples)):
                num = den = 0.0
                for j, (_, v) in enumerate(samples[:k + 1]):
                    w = self.weight ** (k - j)
                    num += w * v
                    den += w
                smoothed.append((samples[k][0], num / den))
            (t0, v0), (t1, v1) = smoothed[-2], smoothed[-1]
            return (v1 - v0) / (t1 - t0)
        diffs = []
        for (t0, v0), (t1, v1) in zip(samples, samples[1:]):
            diffs.append((v1 - v0) / (t1 - t0))
        n = len(diffs)
        num = den = 0.0
        for k, a in enumerate(diffs):
            w = self.weight ** (n - 1 - k)
            num += w * a
            den += w
        return num / den


def transform_lead(frame: PerceptionFrame, ego_speed: float,
                   accel: float = 0.0) -> LeadState:
    """Camera-relative measurements to the lead state used by the planner."""
    if not frame.has_lead:
        raise ValueError("frame has no lead")
    return LeadState(gap=frame.gap, speed=frame.rel_speed + ego_speed, accel=accel)


def select_terminal_conditions(link, ego: KinState, time_in_link: float,
                               red_signal: bool) -> BoundaryConditions:
    """Boundary conditions for the remaining part of the current link.

    Distance and horizon shrink with progress; the terminal speed is zero on
    a red signal or a stop-sign link end and the link's planned final speed
    (its average traffic speed) otherwise.
    """
    remaining = link.length - ego.x
    if remaining <= 0.0:
        raise LinkTransition(f"past the end of link {link.link_id}")
    horizon = max(link.duration - time_in_link, HORIZON_FLOOR)
    if red_signal or link.end_feature == FEATURE_STOP:
        final = 0.0
    else:
        final = min(link.final_speed, link.v_max)
    return BoundaryConditions(ego.v, final, remaining, horizon)


@dataclass
class Advisory:
    """One advisory tick: the displayed target plus the plan behind it."""

    target_speed: float
    profile: SpeedProfile
    active_constraint: str
    bc: BoundaryConditions
    tick_time: float = 0.0


class SpeedAdvisor:
    """Stateful per-vehicle advisor: light latch, lead history, link tracking.

    Single-owner object: feed perception frames through `observe` (at the
    camera rate) and call `step` at the advisory rate.  Not reentrant.
    """

    def __init__(self, history: LeadHistory = None, horizon_cap_factor=10.0):
        self.history = history if history is not None else LeadHistory()
        self.horizon_cap_factor = horizon_cap_factor
        self.red_latched = False
        self._link_id = None
        self._link_entry_time = 0.0
        self._last_advisory = None
        self._last_plan_red = False
        self._last_frame = None

    def observe(self, frame: PerceptionFrame, ego_speed: float):
        """Ingest one perception frame: update the latch and the lead history."""
        self._last_frame = frame
        if frame.red:
            self.red_latched = True
        elif frame.green:
            self.red_latched = False
        if frame.has_lead:
            self.history.push(frame.timestamp, frame.rel_speed + ego_speed)
        else:
            self.history.clear()

    def _enter_link(self, link, t):
        # clearing the latch only on a true transition keeps a red observed
        # before the very first tick
        if self._link_id is not None:
            self.red_latched = False
        self._link_id = link.link_id
        self._link_entry_time = t
        self._last_advisory = None
        self._last_plan_red = False

    def step(self, ego: KinState, link, frame: PerceptionFrame = None) -> Advisory:
        """Produce the advisory for the current tick."""
        if link.link_id != self._link_id:
            self._enter_link(link, ego.t)
        if frame is not None:
            self.observe(frame, ego.v)
        time_in_link = ego.t - self._link_entry_time

        red = self.red_latched and link.end_feature == FEATURE_LIGHT
        lead = None
        last = self._last_frame
        if last is not None and last.has_lead:
            if last.gap < 0.0:
                return self._fallback(ego, 0.0, ego.t, v_ceiling=link.v_max)
            lead = transform_lead(last, ego.v, self.history.accel_estimate())

        # with the schedule exhausted and only the tail of the link left,
        # re-planning is numerically meaningless: hold the advice until the
        # transition (a latch flip or a lead still forces a re-plan)
        remaining_time = link.duration - time_in_link
        at_link_tail = link.length - ego.x <= max(3.0 * ego.v, 10.0)
        if (remaining_time < HORIZON_FLOOR and at_link_tail and lead is None
                and self._last_advisory is not None
                and self._last_advisory.active_constraint != CONSTRAINT_FALLBACK
                and red == self._last_plan_red):
            held = self._last_advisory
            return Advisory(held.target_speed, held.profile, held.active_constraint,
                            held.bc, tick_time=ego.t)

        bc = select_terminal_conditions(link, ego, time_in_link, red)

        # tracking tolerance can push the measured speed a hair over the
        # limit; the margin needs v_max >= both boundary speeds to be defined
        v_max_eff = max(link.v_max, bc.start_speed, bc.final_speed)
        active = CONSTRAINT_NONE
        try:
            adjusted = adjust_horizon(bc, v_max_eff, lead,
                                      horizon_cap=self.horizon_cap_factor * bc.horizon)
            if adjusted is not bc:
                lead_bad = lead is not None and lead_gap_margin(bc, lead) < 0.0
                active = CONSTRAINT_LEAD if lead_bad else CONSTRAINT_VMAX
            bc = adjusted
        except (InfeasibleHorizon, InfeasibleConstraint):
            gap = lead.gap if lead is not None else bc.distance
            return self._fallback(ego, gap, ego.t, v_ceiling=link.v_max)

        profile = solve_unconstrained(bc)
        tau = min(PREVIEW_TIME, bc.horizon)
        target = min(max(profile.speed(tau), 0.0), link.v_max)
        advisory = Advisory(target, profile, active, bc, tick_time=ego.t)
        self._last_advisory = advisory
        self._last_plan_red = red
        return advisory

    def _fallback(self, ego, gap, t, v_ceiling=None) -> Advisory:
        """Stopping advisory when no horizon makes the lead gap feasible.

        The plan is the gentlest stop inside the remaining gap: with a zero
        terminal speed and horizon 2*gap/v the closed form degenerates to a
        linear ramp to standstill.
        """
        distance = max(gap, 0.5)
        v0 = ego.v
        horizon = max(2.0 * distance / max(v0, 0.5), HORIZON_FLOOR)
        bc = BoundaryConditions(v0, 0.0, distance, horizon)
        profile = solve_unconstrained(bc)
        tau = min(PREVIEW_TIME, bc.horizon)
        target = max(profile.speed(tau), 0.0)
        if v_ceiling is not None:
            target = min(target, v_ceiling)
        advisory = Advisory(target, profile, CONSTRAINT_FALLBACK, bc, tick_time=t)
        self._last_advisory = advisory
        return advisory
