"""Independent verification suites for the closed-form profile machinery.

The optimality check runs a dynamic program over a speed-by-time lattice
with exact stage integrals (piecewise-constant acceleration), dualizing the
terminal-distance equality with a scalar multiplier.  The reported lattice
optimum is the concave dual bound, which can never fall below the true
continuous optimum, so the comparison against the closed-form cost is
conservative: a suboptimal closed form fails, a correct one passes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ocp import BoundaryConditions, LeadState, lead_gap_margin, profile_cost, \
    solve_unconstrained, speed_limit_margin
from .vehicle import VehicleParams


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checked: int
    failures: list
    detail: str = ""

    def summary(self) -> str:
        state = "pass" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{state}  {self.name}: {self.checked - len(self.failures)}/{self.checked}{extra}"


class LatticePlanner:
    """Minimum-cost speed trajectory on a (time step, speed step) lattice.

    Stage costs are the exact integrals of the planning cost over one step of
    constant acceleration; the terminal distance is handled by a multiplier.
    """

    def __init__(self, bc, params, dt=0.1, dv=0.05, accel_limit=3.0, v_cap=None):
        self.bc = bc
        self.params = params
        self.dt = dt
        self.dv = dv
        self.n_steps = int(round(bc.horizon / dt))
        if abs(self.n_steps * dt - bc.horizon) > 1e-9:
            raise ValueError("horizon must sit on the time lattice")
        if v_cap is None:
            v_cap = max(bc.start_speed, bc.final_speed, 2.0 * bc.distance / bc.horizon) + 4.0
        self.n_v = int(round(v_cap / dv)) + 1
        self.j_start = self._lattice_index(bc.start_speed)
        self.j_final = self._lattice_index(bc.final_speed)
        m = int(accel_limit * dt / dv + 1e-9)
        self.offsets = np.arange(-m, m + 1)
        v_grid = np.arange(self.n_v) * dv
        accel = self.offsets * dv / dt
        v_mid = v_grid[:, None] + self.offsets[None, :] * dv / 2.0
        ah = accel[None, :] + params.resist_decel
        p0 = params.traction_cost_coeff
        p1 = params.accel_loss_coeff
        self.stage_cost = (p0 * ah * v_mid + p1 * ah * ah) * dt
        self.stage_dist = v_mid * dt

    def _lattice_index(self, v):
        j = int(round(v / self.dv))
        if abs(j * self.dv - v) > 1e-9:
            raise ValueError("boundary speed must sit on the speed lattice")
        if not 0 <= j < self.n_v:
            raise ValueError("boundary speed outside the lattice")
        return j

    def solve(self, lam):
        """Best trajectory for multiplier lam.

        Returns (dual value, terminal distance, exact primal cost).
        """
        n_v = self.n_v
        offs = self.offsets
        cost_lam = self.stage_cost - lam * self.stage_dist
        value = np.full(n_v, np.inf)
        value[self.j_final] = 0.0
        choice = np.zeros((self.n_steps, n_v), dtype=np.uint8)
        cand = np.empty((len(offs), n_v))
        for k in range(self.n_steps - 1, -1, -1):
            cand.fill(np.inf)
            for oi, off in enumerate(offs):
                if off >= 0:
                    src = slice(0, n_v - off)
                    dst = slice(off, n_v)
                else:
                    src = slice(-off, n_v)
                    dst = slice(0, n_v + off)
                cand[oi, src] = cost_lam[src, oi] + value[dst]
            idx = np.argmin(cand, axis=0)
            value = cand[idx, np.arange(n_v)]
            choice[k] = idx
        best = value[self.j_start]
        if not np.isfinite(best):
            raise ValueError("no lattice trajectory meets the boundary speeds")
        j = self.j_start
        dist = 0.0
        cost = 0.0
        for k in range(self.n_steps):
            oi = choice[k, j]
            cost += self.stage_cost[j, oi]
            dist += self.stage_dist[j, oi]
            j += int(self.offsets[oi])
        dual = best + lam * self.bc.distance
        return dual, dist, cost

    def optimum_bound(self, iterations=48):
        """Concave dual bound on the lattice optimum with terminal distance."""
        lo, hi = -1e5, 2e5
        g_lo, x_lo, _ = self.solve(lo)
        g_hi, x_hi, _ = self.solve(hi)
        guard = 0
        while x_lo > self.bc.distance and guard < 8:
            lo *= 4.0
            g_lo, x_lo, _ = self.solve(lo)
            guard += 1
        while x_hi < self.bc.distance and guard < 16:
            hi *= 4.0
            g_hi, x_hi, _ = self.solve(hi)
            guard += 1
        best = max(g_lo, g_hi)
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            g, x, _ = self.solve(mid)
            best = max(best, g)
            if x < self.bc.distance:
                lo = mid
            else:
                hi = mid
        return best


def _snap(value, step):
    return round(value / step) * step


def random_planner_instance(rng, dt=0.1, dv=0.05, d_max=300.0, t_max=40.0):
    """Random boundary conditions on the lattice with a benign optimal profile."""
    while True:
        t = _snap(rng.uniform(8.0, min(30.0, t_max)), dt)
        mean = rng.uniform(3.0, min(10.0, d_max / t))
        v0 = _snap(rng.uniform(0.0, 14.0), dv)
        vf = _snap(rng.uniform(0.0, 14.0), dv)
        d = mean * t
        if d > d_max:
            continue
        bc = BoundaryConditions(v0, vf, d, t)
        prof = solve_unconstrained(bc)
        if prof.min_speed() < 0.2 or prof.peak_speed() > 18.0:
            continue
        if max(abs(prof.accel(0.0)), abs(prof.accel(t))) > 2.4:
            continue
        return bc


def optimality_suite(n_instances=50, seed=2024, slack=0.01, params=None,
                     dt=0.1, dv=0.05):
    """Closed-form cost must not exceed the lattice optimum by more than slack."""
    params = params or VehicleParams()
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(n_instances):
        bc = random_planner_instance(rng, dt=dt, dv=dv)
        analytic = profile_cost(solve_unconstrained(bc), params)
        planner = LatticePlanner(bc, params, dt=dt, dv=dv)
        reference = planner.optimum_bound()
        # sign-safe slack: equals reference*(1+slack) for positive costs and
        # keeps the same tolerance direction for net-regenerative instances
        if analytic > reference + slack * abs(reference):
            failures.append((i, bc, analytic, reference))
    return SuiteResult("profile optimality vs lattice planner", not failures,
                       n_instances, failures, detail=f"slack {slack:.3%}")


def speed_margin_suite(n_instances=1000, seed=2025, grid_step=1e-3):
    """Speed-limit margin sign must match a dense scan of the profile."""
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(n_instances):
        v0 = rng.uniform(0.0, 18.0)
        vf = rng.uniform(0.0, 18.0)
        t = rng.uniform(5.0, 40.0)
        d = rng.uniform(1.0, 16.0) * t
        bc = BoundaryConditions(v0, vf, d, t)
        v_max = max(v0, vf) + rng.uniform(0.0, 8.0)
        prof = solve_unconstrained(bc)
        grid = np.linspace(0.0, t, int(round(t / grid_step)) + 1)
        scan_ok = float(np.max(prof.speed(grid))) <= v_max + 1e-6
        if (speed_limit_margin(bc, v_max) >= 0.0) != scan_ok:
            failures.append((i, bc, v_max))
    return SuiteResult("speed-limit margin sign vs grid scan", not failures,
                       n_instances, failures)


def lead_margin_suite(n_instances=1000, seed=2026, grid_step=1e-3):
    """Lead-gap margin sign must match a dense scan of the predicted gap."""
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(n_instances):
        v0 = rng.uniform(0.0, 18.0)
        vf = rng.uniform(0.0, 18.0)
        t = rng.uniform(5.0, 40.0)
        d = rng.uniform(1.0, 16.0) * t
        bc = BoundaryConditions(v0, vf, d, t)
        lead = LeadState(gap=rng.uniform(0.0, 80.0), speed=rng.uniform(0.0, 15.0),
                         accel=rng.uniform(-1.5, 1.5))
        prof = solve_unconstrained(bc)
        grid = np.linspace(0.0, t, int(round(t / grid_step)) + 1)
        gaps = (lead.gap + lead.speed * grid + 0.5 * lead.accel * grid ** 2
                - prof.position(grid))
        if (lead_gap_margin(bc, lead) >= 0.0) != (float(np.min(gaps)) >= 0.0):
            failures.append((i, bc, lead))
    return SuiteResult("lead-gap margin sign vs grid scan", not failures,
                       n_instances, failures)


def boundary_suite(n_instances=10000, seed=2027):
    """Profiles must hit the final speed and distance to 1e-9 relative."""
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(n_instances):
        v0 = rng.uniform(0.0, 20.0)
        vf = rng.uniform(0.0, 20.0)
        t = rng.uniform(1.0, 60.0)
        d = rng.uniform(0.5, 18.0) * t
        bc = BoundaryConditions(v0, vf, d, t)
        prof = solve_unconstrained(bc)
        err_v = abs(prof.speed(t) - vf) / max(1.0, vf)
        err_d = abs(prof.position(t) - d) / d
        if err_v > 1e-9 or err_d > 1e-9:
            failures.append((i, bc, err_v, err_d))
    return SuiteResult("boundary-condition exactness", not failures,
                       n_instances, failures)


def run_all_suites(instances=None, seed=None, slack=0.01):
    """The oracle-check battery: boundary, margins, and optimality suites."""
    kw = {} if seed is None else {"seed": seed}
    results = [
        boundary_suite(**({"n_instances": instances} if instances else {}), **kw),
        speed_margin_suite(**({"n_instances": instances} if instances else {}), **kw),
        lead_margin_suite(**({"n_instances": instances} if instances else {}), **kw),
        optimality_suite(
            **({"n_instances": min(instances, 50)} if instances else {}),
            slack=slack, **kw),
    ]
    return results
