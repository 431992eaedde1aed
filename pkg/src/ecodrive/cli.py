"""Command-line entry point.

Subcommands: `simulate` runs a scenario closed-loop and writes traces,
advisory logs, a summary, and figures; `score` computes eco scores for
recorded trips; `compare` reports advised-vs-baseline gains; `oracle-check`
runs the independent verification suites.

Exit codes: 0 success, 1 property/acceptance failure, 2 input error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import EcoDriveError
from .routemap import parse_route
from .score import compare_trips, score_trip
from .sim import parse_scenario, run_scenario
from .vehicle import TripTrace, VehicleParams, load_vehicle_params

OUT_ENV = "ECODRIVE_OUT"


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUT_ENV) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_rows(path, header, rows):
    lines = [header]
    for row in rows:
        lines.append(",".join(f"{v:.10g}" if isinstance(v, float) else str(v)
                              for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def cmd_simulate(args) -> int:
    scenario = parse_scenario(args.scenario)
    if args.dt is not None:
        scenario.dt = args.dt
    if args.seed is not None:
        scenario.seed = args.seed
    scenario.validate()
    out = _out_dir(args)
    result = run_scenario(scenario)

    summary = [f"scenario {scenario.name} (seed {scenario.seed}, dt {scenario.dt:g})"]
    for kind in ("ed", "hd"):
        run = result[kind]
        trace_path = out / f"{scenario.name}_{kind}_trace.csv"
        lines = ["t,x,v,a,P_b"]
        for tk, xk, vk, ak, pk in zip(run.trace.t, run.trace.x, run.trace.v,
                                      run.accel, run.power):
            lines.append(f"{tk:.10g},{xk:.10g},{vk:.10g},{ak:.10g},{pk:.10g}")
        trace_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        summary.append(f"{kind}: trip time {run.trip_time:.1f} s,"
                       f" energy {run.energy_wh:.2f} Wh -> {trace_path.name}")
    adv_path = out / f"{scenario.name}_ed_advisory.csv"
    _write_rows(adv_path, "t,target_speed,active_constraint,T,D,V",
                [(r.t, r.target_speed, r.active_constraint,
                  r.horizon, r.distance, r.final_speed)
                 for r in result["ed"].advisories])

    ed, hd = result["ed"], result["hd"]
    gain = (hd.energy_wh - ed.energy_wh) / hd.energy_wh * 100.0
    dv = ((ed.trace.mean_speed - hd.trace.mean_speed)
          / hd.trace.mean_speed * 100.0)
    summary.append(f"energy gain {gain:.2f} %, average speed change {dv:.2f} %")
    (out / f"{scenario.name}_summary.txt").write_text(
        "\n".join(summary) + "\n", encoding="utf-8")

    if not args.no_figures:
        from . import plots
        plots.save_speed_profiles(result.runs, scenario.route,
                                  out / f"{scenario.name}_speed.png")
        plots.save_energy_profiles(result.runs, scenario.route, scenario.params,
                                   out / f"{scenario.name}_energy.png")
    print(f"{scenario.name}: ed {ed.trip_time:.1f} s / {ed.energy_wh:.2f} Wh,"
          f" hd {hd.trip_time:.1f} s / {hd.energy_wh:.2f} Wh,"
          f" gain {gain:.2f} %")
    return 0


def _load_params(args) -> VehicleParams:
    if getattr(args, "vehicle", None):
        return load_vehicle_params(args.vehicle)
    return VehicleParams()


def cmd_score(args) -> int:
    if not args.trace:
        raise EcoDriveError("score needs at least one --trace")
    route = parse_route(args.route)
    params = _load_params(args)
    out = _out_dir(args)
    kw = {}
    if args.prominence is not None:
        kw["prominence_min"] = args.prominence
    rows = []
    overlays = []
    for trace_path in args.trace:
        trip = Path(trace_path).stem
        trace = TripTrace.read_csv(trace_path)
        report, reference, breakpoints = score_trip(trace, route, params,
                                                    trip=trip, **kw)
        rows.append((trip, report.driven_wh, report.reference_wh, report.score))
        overlays.append((trip, trace, reference, breakpoints))
        print(f"{trip}: driven {report.driven_wh:.2f} Wh,"
              f" reference {report.reference_wh:.2f} Wh, score {report.score:.4f}")
    _write_rows(out / "eds.csv", "trip,E_D_Wh,E_T_Wh,EDS", rows)
    if not args.no_figures:
        from . import plots
        for trip, trace, reference, breakpoints in overlays:
            plots.save_reference_overlay(trace, reference, breakpoints,
                                         out / f"{trip}_reference.png", title=trip)
    return 0


def cmd_compare(args) -> int:
    if not args.trace or len(args.trace) != 2:
        raise EcoDriveError("compare needs exactly two --trace arguments (ed, hd)")
    route = parse_route(args.route)
    params = _load_params(args)
    out = _out_dir(args)
    ed = TripTrace.read_csv(args.trace[0])
    hd = TripTrace.read_csv(args.trace[1])
    trip = Path(args.trace[0]).stem
    cmp = compare_trips(ed, hd, params, route, trip=trip)
    _write_rows(out / "comparison.csv", "trip,energy_gain_pct,delta_avg_speed_pct",
                [(trip, cmp.energy_gain_pct, cmp.delta_avg_speed_pct)])
    _write_rows(out / "eds.csv", "trip,E_D_Wh,E_T_Wh,EDS",
                [(Path(args.trace[0]).stem, cmp.ed.driven_wh,
                  cmp.ed.reference_wh, cmp.ed.score),
                 (Path(args.trace[1]).stem, cmp.hd.driven_wh,
                  cmp.hd.reference_wh, cmp.hd.score)])
    if not args.no_figures:
        from . import plots
        plots.save_comparison_scatter(
            [(trip, cmp.energy_gain_pct, cmp.delta_avg_speed_pct)],
            out / "comparison.png")
        plots.save_score_bars([(trip, cmp.ed.score, cmp.hd.score)],
                              out / "eds.png")
    print(f"{trip}: energy gain {cmp.energy_gain_pct:.2f} %,"
          f" speed change {cmp.delta_avg_speed_pct:.2f} %,"
          f" scores ed {cmp.ed.score:.4f} / hd {cmp.hd.score:.4f}")
    return 0


def cmd_oracle_check(args) -> int:
    from .oracle import run_all_suites

    results = run_all_suites(instances=args.instances, seed=args.seed,
                             slack=args.slack)
    failed = False
    for res in results:
        print(res.summary())
        failed = failed or not res.passed
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecodrive",
        description="energy-optimal speed advisory simulation and analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario closed-loop")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--out")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--dt", type=float)
    sim.add_argument("--no-figures", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    score = sub.add_parser("score", help="eco-score recorded trips")
    score.add_argument("--trace", action="append", default=[])
    score.add_argument("--route", required=True)
    score.add_argument("--vehicle")
    score.add_argument("--prominence", type=float)
    score.add_argument("--out")
    score.add_argument("--no-figures", action="store_true")
    score.set_defaults(func=cmd_score)

    comp = sub.add_parser("compare", help="compare an advised and a baseline trip")
    comp.add_argument("--trace", action="append", default=[])
    comp.add_argument("--route", required=True)
    comp.add_argument("--vehicle")
    comp.add_argument("--out")
    comp.add_argument("--no-figures", action="store_true")
    comp.set_defaults(func=cmd_compare)

    oracle = sub.add_parser("oracle-check", help="run the verification suites")
    oracle.add_argument("--instances", type=int)
    oracle.add_argument("--seed", type=int)
    oracle.add_argument("--slack", type=float, default=0.01)
    oracle.set_defaults(func=cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 2
    except EcoDriveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
