"""Route data model, projections, link aggregation, and map matching.

Routes are ordered geo-referenced links.  Geodetic polylines are projected
to a planar frame (local tangent plane by default, conformal conic for
France available), and GPS points are matched point-to-curve to the nearest
link, yielding an arc-length position along it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import OffRouteError, RouteError
from .vehicle import KMH

EARTH_RADIUS = 6371000.0
OFF_ROUTE_DISTANCE = 50.0

FEATURE_NONE = "none"
FEATURE_LIGHT = "traffic_light"
FEATURE_STOP = "stop_sign"
FEATURE_SPEED = "speed_change"
FEATURES = (FEATURE_NONE, FEATURE_LIGHT, FEATURE_STOP, FEATURE_SPEED)


class TangentPlane:
    """Local tangent plane anchored at a reference coordinate (spherical earth)."""

    name = "tangent"

    def __init__(self, lat0, lon0):
        self.lat0 = lat0
        self.lon0 = lon0
        self._coslat = math.cos(math.radians(lat0))

    def to_planar(self, lat, lon):
        x = math.radians(lon - self.lon0) * EARTH_RADIUS * self._coslat
        y = math.radians(lat - self.lat0) * EARTH_RADIUS
        return x, y

    def to_geodetic(self, x, y):
        lat = self.lat0 + math.degrees(y / EARTH_RADIUS)
        lon = self.lon0 + math.degrees(x / (EARTH_RADIUS * self._coslat))
        return lat, lon


class LambertConic:
    """Conformal conic projection for metropolitan France (RGF93 constants)."""

    name = "lambert93"

    A = 6378137.0
    F = 1.0 / 298.257222101
    LAT0 = 46.5
    LON0 = 3.0
    LAT1 = 44.0
    LAT2 = 49.0
    X0 = 700000.0
    Y0 = 6600000.0
    LAT_RANGE = (41.0, 51.5)
    LON_RANGE = (-5.5, 10.0)

    def __init__(self):
        e2 = self.F * (2.0 - self.F)
        self.e = math.sqrt(e2)
        m1 = self._m(self.LAT1)
        m2 = self._m(self.LAT2)
        t0 = self._t(self.LAT0)
        t1 = self._t(self.LAT1)
        t2 = self._t(self.LAT2)
        self.n = (math.log(m1) - math.log(m2)) / (math.log(t1) - math.log(t2))
        self.big_f = m1 / (self.n * t1 ** self.n)
        self.rho0 = self.A * self.big_f * t0 ** self.n

    def _m(self, lat_deg):
        phi = math.radians(lat_deg)
        return math.cos(phi) / math.sqrt(1.0 - (self.e * math.sin(phi)) ** 2)

    def _t(self, lat_deg):
        phi = math.radians(lat_deg)
        es = self.e * math.sin(phi)
        return math.tan(math.pi / 4.0 - phi / 2.0) / ((1.0 - es) / (1.0 + es)) ** (self.e / 2.0)

    def _check_zone(self, lat, lon):
        if not (self.LAT_RANGE[0] <= lat <= self.LAT_RANGE[1]
                and self.LON_RANGE[0] <= lon <= self.LON_RANGE[1]):
            raise RouteError(f"coordinate ({lat}, {lon}) outside the projection zone")

    def to_planar(self, lat, lon):
        self._check_zone(lat, lon)
        rho = self.A * self.big_f * self._t(lat) ** self.n
        gamma = self.n * math.radians(lon - self.LON0)
        x = self.X0 + rho * math.sin(gamma)
        y = self.Y0 + self.rho0 - rho * math.cos(gamma)
        return x, y

    def to_geodetic(self, x, y):
        dx = x - self.X0
        dy = self.rho0 - (y - self.Y0)
        rho = math.copysign(math.hypot(dx, dy), self.n)
        t = (rho / (self.A * self.big_f)) ** (1.0 / self.n)
        gamma = math.atan2(dx, dy)
        lon = self.LON0 + math.degrees(gamma / self.n)
        phi = math.pi / 2.0 - 2.0 * math.atan(t)
        for _ in range(8):
            es = self.e * math.sin(phi)
            phi = math.pi / 2.0 - 2.0 * math.atan(
                t * ((1.0 - es) / (1.0 + es)) ** (self.e / 2.0))
        return math.degrees(phi), lon


def make_projection(name, anchor=None):
    if name == "tangent":
        if anchor is None:
            raise RouteError("tangent projection needs an anchor coordinate")
        return TangentPlane(*anchor)
    if name == "lambert93":
        return LambertConic()
    raise RouteError(f"unknown projection '{name}'")


@dataclass
class Link:
    """One homogeneous route segment, delimited by a feature or speed change."""

    link_id: str
    polyline: np.ndarray        # (n, 2) latitude/longitude [deg]
    v_max: float                # speed limit [m/s]
    length: float               # [m]
    duration: float             # planned traversal time [s]
    final_speed: float          # planned speed at the link end [m/s]
    end_feature: str = FEATURE_NONE

    def __post_init__(self):
        self.polyline = np.asarray(self.polyline, dtype=float)
        if self.polyline.ndim != 2 or self.polyline.shape[1] != 2 or len(self.polyline) < 2:
            raise RouteError(f"link {self.link_id}: polyline needs >= 2 (lat, lon) rows")
        if self.v_max <= 0 or self.length <= 0 or self.duration <= 0:
            raise RouteError(f"link {self.link_id}: v_max, length, duration must be > 0")
        if self.final_speed < 0 or self.final_speed > self.v_max + 1e-9:
            raise RouteError(f"link {self.link_id}: final speed outside [0, v_max]")
        if self.end_feature not in FEATURES:
            raise RouteError(f"link {self.link_id}: unknown end feature '{self.end_feature}'")


@dataclass(frozen=True)
class MatchResult:
    """Map-matching output: the link, the arc position on it, and the error."""

    link_id: str
    link_index: int
    x: float
    lateral_error: float


class Route:
    """An ordered, connected sequence of links with planar geometry attached."""

    def __init__(self, links, origin=None, destination=None, projection="tangent"):
        if not links:
            raise RouteError("route needs at least one link")
        self.links = list(links)
        ids = [l.link_id for l in self.links]
        if len(set(ids)) != len(ids):
            raise RouteError("link ids must be unique")
        self.origin = tuple(origin) if origin is not None else tuple(self.links[0].polyline[0])
        self.destination = (tuple(destination) if destination is not None
                            else tuple(self.links[-1].polyline[-1]))
        self.projection_name = projection
        self.projection = make_projection(projection, anchor=self.origin)
        self._planar = []
        self._cumdist = []
        for link in self.links:
            pts = np.array([self.projection.to_planar(lat, lon)
                            for lat, lon in link.polyline])
            seg = np.hypot(*np.diff(pts, axis=0).T)
            cum = np.concatenate([[0.0], np.cumsum(seg)])
            arc = float(cum[-1])
            if abs(arc - link.length) > 1e-3 * link.length:
                raise RouteError(
                    f"link {link.link_id}: declared length {link.length:.2f} m"
                    f" differs from polyline arc length {arc:.2f} m by more than 0.1%")
            self._planar.append(pts)
            self._cumdist.append(cum)
        for prev, nxt, p_pts, n_pts in zip(self.links, self.links[1:],
                                           self._planar, self._planar[1:]):
            gap = math.hypot(*(n_pts[0] - p_pts[-1]))
            if gap > 1.0:
                raise RouteError(
                    f"links {prev.link_id} and {nxt.link_id} endpoints {gap:.2f} m apart")
        self.starts = np.concatenate([[0.0], np.cumsum([l.length for l in self.links])])

    def __len__(self):
        return len(self.links)

    def __iter__(self):
        return iter(self.links)

    @property
    def total_length(self) -> float:
        return float(self.starts[-1])

    @property
    def total_duration(self) -> float:
        return float(sum(l.duration for l in self.links))

    def planar_polyline(self, index):
        return self._planar[index]

    def link_start(self, index) -> float:
        return float(self.starts[index])

    def index_of(self, link_id) -> int:
        for i, link in enumerate(self.links):
            if link.link_id == link_id:
                return i
        raise RouteError(f"no link '{link_id}' in route")

    def locate(self, s):
        """Map a route-wide arc position to (link index, position on link)."""
        s = min(max(s, 0.0), self.total_length)
        i = int(np.searchsorted(self.starts, s, side="right")) - 1
        i = min(max(i, 0), len(self.links) - 1)
        return i, s - self.starts[i]

    def point_at(self, s):
        """Planar point at a route-wide arc position."""
        i, x = self.locate(s)
        cum = self._cumdist[i]
        pts = self._planar[i]
        # the declared length may differ from the arc length by a rounding hair
        x = min(max(x, 0.0), cum[-1])
        k = int(np.searchsorted(cum, x, side="right")) - 1
        k = min(max(k, 0), len(cum) - 2)
        span = cum[k + 1] - cum[k]
        w = 0.0 if span <= 0 else (x - cum[k]) / span
        return tuple(pts[k] + w * (pts[k + 1] - pts[k]))

    def speed_limit_at(self, s) -> float:
        i, _ = self.locate(min(s, self.total_length - 1e-9))
        return self.links[i].v_max

    def feature_positions(self, features=(FEATURE_LIGHT, FEATURE_STOP, FEATURE_SPEED)):
        """(route position, feature, link_id) for every flagged link end."""
        out = []
        for i, link in enumerate(self.links):
            if link.end_feature in features:
                out.append((float(self.starts[i + 1]), link.end_feature, link.link_id))
        return out


def _project_to_segment(p, a, b):
    ab = b - a
    denom = float(ab @ ab)
    if denom <= 0.0:
        return 0.0, float(np.hypot(*(p - a)))
    w = float((p - a) @ ab) / denom
    w = min(max(w, 0.0), 1.0)
    foot = a + w * ab
    return w, float(np.hypot(*(p - foot)))


class Matcher:
    """Stateful point-to-curve matcher for one vehicle driving one route.

    After a first match, the candidate search is restricted to the current
    and the next link; ties keep the earlier link in route order.  An
    optional exponential smoother damps GPS jitter on the matched position.
    """

    def __init__(self, route, smooth_tau=None):
        self.route = route
        self.smooth_tau = smooth_tau
        self._last_index = None
        self._last_x = None
        self._last_t = None

    def reset(self):
        self._last_index = None
        self._last_x = None
        self._last_t = None

    def _match_link(self, index, p):
        pts = self.route.planar_polyline(index)
        cum = self.route._cumdist[index]
        best_x, best_err = 0.0, float("inf")
        for k in range(len(pts) - 1):
            w, err = _project_to_segment(p, pts[k], pts[k + 1])
            if err < best_err:
                best_err = err
                best_x = float(cum[k] + w * (cum[k + 1] - cum[k]))
        return min(best_x, self.route.links[index].length), best_err

    def match(self, point, t=None) -> MatchResult:
        p = np.asarray(point, dtype=float)
        if self._last_index is None:
            candidates = range(len(self.route))
        else:
            candidates = [i for i in (self._last_index, self._last_index + 1)
                          if i < len(self.route)]
        best = None
        for i in candidates:
            x, err = self._match_link(i, p)
            if best is None or err < best[2]:
                best = (i, x, err)
        index, x, err = best
        if err > OFF_ROUTE_DISTANCE:
            raise OffRouteError(f"nearest link {err:.1f} m away (> {OFF_ROUTE_DISTANCE} m)")
        if (self.smooth_tau and self._last_index == index
                and self._last_t is not None and t is not None and t > self._last_t):
            alpha = 1.0 - math.exp(-(t - self._last_t) / self.smooth_tau)
            x = self._last_x + alpha * (x - self._last_x)
        self._last_index = index
        self._last_x = x
        self._last_t = t
        return MatchResult(self.route.links[index].link_id, index, x, err)


def match_point(route, point) -> MatchResult:
    """Stateless single-point match over the whole route."""
    return Matcher(route).match(point)


def aggregate_links(links, min_length=50.0):
    """Merge links into their successors per the perception heuristics.

    A link is absorbed by its successor when it is shorter than `min_length`
    or when it carries no end feature and the successor has the same speed
    limit.  Traffic-light and stop-sign boundaries are never removed.  The
    merged link keeps the successor's identity, final speed, and end feature;
    lengths and durations add up exactly.
    """
    out = [l for l in links]
    changed = True
    while changed:
        changed = False
        for i in range(len(out) - 1):
            a, b = out[i], out[i + 1]
            if a.end_feature in (FEATURE_LIGHT, FEATURE_STOP):
                continue
            if a.length < min_length or (a.end_feature == FEATURE_NONE
                                         and a.v_max == b.v_max):
                poly = np.vstack([a.polyline, b.polyline[1:]])
                out[i:i + 2] = [Link(
                    link_id=b.link_id,
                    polyline=poly,
                    v_max=b.v_max,
                    length=a.length + b.length,
                    duration=a.duration + b.duration,
                    final_speed=b.final_speed,
                    end_feature=b.end_feature,
                )]
                changed = True
                break
    return out


def parse_route(path) -> Route:
    """Read the structured route file (header section plus link table)."""
    path = Path(path)
    section = None
    header = {}
    links = []
    for ln, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            continue
        if section == "route":
            if "=" not in line:
                raise RouteError(f"{path}: line {ln}: expected 'key = value'")
            key, _, val = line.partition("=")
            header[key.strip()] = val.strip()
        elif section == "links":
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 7:
                raise RouteError(f"{path}: line {ln}: expected 7 columns, got {len(parts)}")
            try:
                poly = np.array([[float(c) for c in pair.split()]
                                 for pair in parts[6].split(";") if pair.strip()])
                links.append(Link(
                    link_id=parts[0],
                    polyline=poly,
                    v_max=float(parts[1]) * KMH,
                    length=float(parts[2]),
                    duration=float(parts[3]),
                    final_speed=float(parts[4]) * KMH,
                    end_feature=parts[5],
                ))
            except (ValueError, RouteError) as exc:
                raise RouteError(f"{path}: line {ln}: {exc}") from None
        else:
            raise RouteError(f"{path}: line {ln}: content outside a known section")
    if not links:
        raise RouteError(f"{path}: no links found")

    def _coord(key):
        if key not in header:
            return None
        vals = header[key].split()
        if len(vals) != 2:
            raise RouteError(f"{path}: '{key}' must be 'lat lon'")
        return float(vals[0]), float(vals[1])

    return Route(links,
                 origin=_coord("origin"),
                 destination=_coord("destination"),
                 projection=header.get("projection", "tangent"))


def format_route(route) -> str:
    lines = ["[route]"]
    lines.append(f"origin = {route.origin[0]:.7f} {route.origin[1]:.7f}")
    lines.append(f"destination = {route.destination[0]:.7f} {route.destination[1]:.7f}")
    lines.append(f"projection = {route.projection_name}")
    lines.append("")
    lines.append("[links]")
    lines.append("# id, v_max_kmh, D_f_m, T_f_s, v_f_kmh, end_feature, polyline(lat lon; ...)")
    for link in route.links:
        poly = "; ".join(f"{lat:.7f} {lon:.7f}" for lat, lon in link.polyline)
        lines.append(
            f"{link.link_id}, {link.v_max / KMH:.4f}, {link.length:.4f},"
            f" {link.duration:.4f}, {link.final_speed / KMH:.4f}, {link.end_feature}, {poly}")
    return "\n".join(lines) + "\n"


def write_route(route, path):
    Path(path).write_text(format_route(route), encoding="utf-8")
