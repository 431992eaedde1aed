"""Figure rendering for simulation and scoring reports.

Every function writes a PNG next to the delimited output and returns the
path.  Rendering is headless (Agg backend).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .vehicle import trace_power

STYLE = {
    "figure.figsize": (9.0, 4.5),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
}

COLORS = {"ed": "#1b7837", "hd": "#c0392b"}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def _light_markers(ax, route):
    for pos, feature, _ in route.feature_positions():
        color = {"traffic_light": "#e67e22", "stop_sign": "#7f8c8d"}.get(feature)
        if color:
            ax.axvline(pos, color=color, lw=0.8, ls=":", alpha=0.8)


def save_speed_profiles(runs, route, path):
    """Speed against position for each vehicle, with limits and signals."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for kind, run in runs.items():
            tr = run.trace
            ax.plot(tr.x, tr.v * 3.6, label=kind.upper(),
                    color=COLORS.get(kind), lw=1.2)
        xs = np.linspace(0.0, route.total_length - 1e-6, 600)
        ax.plot(xs, [route.speed_limit_at(x) * 3.6 for x in xs],
                color="k", lw=0.8, ls="--", alpha=0.6, label="limit")
        _light_markers(ax, route)
        ax.set_xlabel("position [m]")
        ax.set_ylabel("speed [km/h]")
        ax.legend(loc="upper right")
        return _save(fig, path)


def save_energy_profiles(runs, route, params, path):
    """Cumulative battery energy against position for each vehicle."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for kind, run in runs.items():
            tr = run.trace
            p = trace_power(tr, params)
            cum = np.concatenate(
                [[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(tr.t))]) / 3600.0
            ax.plot(tr.x, cum, label=kind.upper(), color=COLORS.get(kind), lw=1.2)
        _light_markers(ax, route)
        ax.set_xlabel("position [m]")
        ax.set_ylabel("energy [Wh]")
        ax.legend(loc="upper left")
        return _save(fig, path)


def save_comparison_scatter(rows, path):
    """Energy gain against average-speed change, one point per trip.

    `rows` are (trip, energy_gain_pct, delta_avg_speed_pct).
    """
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 4.5))
        for trip, gain, dv in rows:
            ax.scatter(dv, gain, color="#2c3e50", s=28, zorder=3)
            ax.annotate(str(trip), (dv, gain), textcoords="offset points",
                        xytext=(5, 3), fontsize=8)
        ax.axhline(0.0, color="k", lw=0.8)
        ax.axvline(0.0, color="k", lw=0.8)
        ax.set_xlabel("change in average speed [%]")
        ax.set_ylabel("energy gain [%]")
        return _save(fig, path)


def save_score_bars(rows, path):
    """Per-trip eco scores for both vehicles; `rows` are (trip, ed, hd)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        idx = np.arange(len(rows))
        width = 0.38
        ax.bar(idx - width / 2, [r[1] for r in rows], width,
               label="ED", color=COLORS["ed"])
        ax.bar(idx + width / 2, [r[2] for r in rows], width,
               label="HD", color=COLORS["hd"])
        ax.set_xticks(idx, [str(r[0]) for r in rows])
        ax.set_ylabel("eco-driving score")
        ax.legend()
        return _save(fig, path)


def save_reference_overlay(driven, reference, breakpoints, path, title=""):
    """Driven and reconstructed-optimal speed traces with their anchors."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(driven.x, driven.v * 3.6, color="#2c3e50", lw=1.2, label="driven")
        ax.plot(reference.x, reference.v * 3.6, color="#2980b9", lw=1.2,
                ls="--", label="optimal reference")
        ax.scatter([bp.x for bp in breakpoints],
                   [bp.v * 3.6 for bp in breakpoints],
                   color="#2980b9", s=26, zorder=3, label="breakpoints")
        ax.set_xlabel("position [m]")
        ax.set_ylabel("speed [km/h]")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper right")
        return _save(fig, path)
