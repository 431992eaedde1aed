"""Closed-form energy-optimal speed profiles over a fixed distance and time.

The optimal speed over a horizon with fixed end distance, end time, and end
speed is quadratic in time.  This module builds that profile, evaluates the
validity margins against the speed-limit and lead-vehicle constraints, and
stretches the horizon when a margin goes negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InfeasibleConstraint, InfeasibleHorizon, InvalidBoundaryConditions


@dataclass(frozen=True)
class BoundaryConditions:
    """End conditions of one optimization: speeds [m/s], distance [m], time [s]."""

    start_speed: float
    final_speed: float
    distance: float
    horizon: float

    def __post_init__(self):
        if not self.distance > 0:
            raise InvalidBoundaryConditions(f"distance must be > 0, got {self.distance}")
        if not self.horizon > 0:
            raise InvalidBoundaryConditions(f"horizon must be > 0, got {self.horizon}")
        if self.start_speed < 0 or self.final_speed < 0:
            raise InvalidBoundaryConditions("speeds must be non-negative")


@dataclass(frozen=True)
class LeadState:
    """Lead vehicle as seen from the ego: net gap [m], speed [m/s], accel [m/s^2].

    The gap is net of the lead's length and the minimum spacing, so gap >= 0
    is exactly the collision constraint.
    """

    gap: float
    speed: float
    accel: float = 0.0


@dataclass(frozen=True)
class SpeedProfile:
    """Quadratic speed profile v(tau) = c0 + c1*tau + c2*tau^2 on [0, horizon]."""

    c0: float
    c1: float
    c2: float
    bc: BoundaryConditions

    def speed(self, tau):
        tau = np.asarray(tau, dtype=float)
        return (self.c0 + self.c1 * tau + self.c2 * tau * tau)[()]

    def accel(self, tau):
        tau = np.asarray(tau, dtype=float)
        return (self.c1 + 2.0 * self.c2 * tau)[()]

    def position(self, tau):
        """Distance covered from the start of the horizon to tau [m]."""
        tau = np.asarray(tau, dtype=float)
        return (self.c0 * tau + self.c1 * tau * tau / 2.0 + self.c2 * tau ** 3 / 3.0)[()]

    def _extremum_times(self):
        times = [0.0, self.bc.horizon]
        if self.c2 != 0.0:
            vertex = -self.c1 / (2.0 * self.c2)
            if 0.0 < vertex < self.bc.horizon:
                times.append(vertex)
        return times

    def peak_speed(self) -> float:
        return max(self.speed(t) for t in self._extremum_times())

    def min_speed(self) -> float:
        return min(self.speed(t) for t in self._extremum_times())


def solve_unconstrained(bc: BoundaryConditions) -> SpeedProfile:
    """Energy-optimal profile meeting the boundary conditions exactly.

    The profile satisfies v(0) = start_speed, v(T) = final_speed and covers
    the requested distance by construction.
    """
    v0, vf, d, t = bc.start_speed, bc.final_speed, bc.distance, bc.horizon
    c1 = -4.0 * v0 / t - 2.0 * vf / t + 6.0 * d / (t * t)
    c2 = 3.0 * v0 / (t * t) - 6.0 * d / (t ** 3) + 3.0 * vf / (t * t)
    return SpeedProfile(v0, c1, c2, bc)


def _vmax_radicand(bc, v_max):
    return (v_max - bc.start_speed) * (v_max - bc.final_speed)


def speed_limit_margin(bc: BoundaryConditions, v_max: float) -> float:
    """Margin of the unconstrained profile against the speed limit.

    Non-negative exactly when the profile stays at or below v_max over the
    whole horizon.  Requires v_max >= max(start_speed, final_speed); otherwise
    the radicand goes negative and InfeasibleConstraint is raised.
    """
    rad = _vmax_radicand(bc, v_max)
    if rad < 0:
        raise InfeasibleConstraint(
            "speed limit below a boundary speed: margin undefined")
    return ((bc.start_speed + bc.final_speed + v_max) / 3.0
            - bc.distance / bc.horizon + math.sqrt(rad) / 3.0)


def lead_gap_margin(bc: BoundaryConditions, lead: LeadState) -> float:
    """Smallest predicted gap to the lead over the horizon [m].

    The lead is predicted at constant acceleration; the ego follows the
    unconstrained profile and its position is the exact integral of that
    profile.  Non-negative means the profile never closes the net gap.
    """
    prof = solve_unconstrained(bc)
    # gap(tau) = g0 + (vl - v0) tau + (al - c1) tau^2/2 - c2 tau^3/3
    a3 = -prof.c2 / 3.0
    a2 = (lead.accel - prof.c1) / 2.0
    a1 = lead.speed - bc.start_speed
    a0 = lead.gap

    def gap(tau):
        return a0 + tau * (a1 + tau * (a2 + tau * a3))

    candidates = [0.0, bc.horizon]
    # stationary points: 3*a3 tau^2 + 2*a2 tau + a1 = 0
    qa, qb, qc = 3.0 * a3, 2.0 * a2, a1
    if abs(qa) < 1e-300:
        if abs(qb) > 0:
            tau = -qc / qb
            if 0.0 < tau < bc.horizon:
                candidates.append(tau)
    else:
        disc = qb * qb - 4.0 * qa * qc
        if disc >= 0.0:
            sq = math.sqrt(disc)
            for tau in ((-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)):
                if 0.0 < tau < bc.horizon:
                    candidates.append(tau)
    return min(gap(tau) for tau in candidates)


def min_feasible_horizon(bc: BoundaryConditions, v_max: float) -> float:
    """Smallest horizon whose profile respects the speed limit (margin = 0)."""
    rad = _vmax_radicand(bc, v_max)
    if rad < 0:
        raise InfeasibleConstraint(
            "speed limit below a boundary speed: no feasible horizon")
    denom = bc.start_speed + bc.final_speed + v_max + math.sqrt(rad)
    if denom <= 0:
        raise InfeasibleConstraint("degenerate speed-limit root")
    return 3.0 * bc.distance / denom


def adjust_horizon(bc: BoundaryConditions, v_max: float, lead: LeadState = None,
                   horizon_cap: float = None, tol: float = 1e-6) -> BoundaryConditions:
    """Stretch the horizon until the unconstrained profile is valid.

    Distance and final speed are kept; only the horizon grows.  A lead-gap
    violation takes precedence over the speed limit (when both margins are
    negative only the gap is repaired).  The speed-limit case uses the
    closed-form root; the lead case bisects for the smallest feasible
    horizon at or above the current one.  Raises InfeasibleHorizon when no
    horizon up to the cap (default 10x the current one) restores the gap.
    """
    cap = horizon_cap if horizon_cap is not None else 10.0 * bc.horizon
    gap_bad = lead is not None and lead_gap_margin(bc, lead) < 0.0
    if gap_bad:
        lo = bc.horizon
        hi = None
        t = bc.horizon
        while t < cap:
            t = min(2.0 * t, cap)
            if lead_gap_margin(replace(bc, horizon=t), lead) >= 0.0:
                hi = t
                break
            lo = t
        if hi is None:
            raise InfeasibleHorizon(
                f"no horizon up to {cap:.3f} s restores the lead gap")
        for _ in range(200):
            if hi - lo <= tol and lead_gap_margin(replace(bc, horizon=hi), lead) <= 1e-2:
                break
            mid = 0.5 * (lo + hi)
            if lead_gap_margin(replace(bc, horizon=mid), lead) >= 0.0:
                hi = mid
            else:
                lo = mid
        return replace(bc, horizon=hi)
    if speed_limit_margin(bc, v_max) < 0.0:
        return replace(bc, horizon=min_feasible_horizon(bc, v_max))
    return bc


def profile_cost(profile: SpeedProfile, params) -> float:
    """Exact integral of the energy cost integrand along the profile.

    Integrand: p0*(a+h)*v + p1*(a+h)^2 with p0 the traction cost coefficient,
    p1 the acceleration-domain loss coefficient, h the lumped resistive
    deceleration.  No regenerative clipping: this is the planning cost.
    """
    p0 = params.traction_cost_coeff
    p1 = params.accel_loss_coeff
    h = params.resist_decel
    c0, c1, c2 = profile.c0, profile.c1, profile.c2
    t = profile.bc.horizon
    b0 = c1 + h          # (a + h) = b0 + b1*tau
    b1 = 2.0 * c2
    i1 = (b0 * c0 * t
          + (b0 * c1 + b1 * c0) * t * t / 2.0
          + (b0 * c2 + b1 * c1) * t ** 3 / 3.0
          + b1 * c2 * t ** 4 / 4.0)
    i2 = b0 * b0 * t + b0 * b1 * t * t + b1 * b1 * t ** 3 / 3.0
    return p0 * i1 + p1 * i2
