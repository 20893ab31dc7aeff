"""T-junction layout: routes, the ego reference line, and conflict zones.

Right-hand traffic. The main road runs east-west along the x axis, the stem
joins from the south along the y axis. Main-road edges sit at y = +/- w where
w is the lane width (one lane each way), so the junction mouth spans
y in [-w, +w].

Routes, each a polyline with arc-length parameterization:
  * ego: northbound on the stem at x = +w/2, quarter arc turning left
    (counterclockwise) onto the westbound main lane at y = +w/2.
  * from_left: eastbound main lane at y = -w/2, travelling +x.
  * from_right: westbound main lane at y = +w/2, travelling -x.

Conflict zones are computed numerically: the interval of a route's arc length
whose points pass within one vehicle diagonal of the ego path, and the matching
interval of the ego path. Numeric construction keeps the zones consistent with
the sampled polylines the rest of the code uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import GeometryConfig

EGO_ROUTE = "ego"
FROM_LEFT = "from_left"    # eastbound, +x
FROM_RIGHT = "from_right"  # westbound, -x
AGENT_ROUTES = (FROM_LEFT, FROM_RIGHT)


@dataclass(frozen=True)
class ConflictZone:
    """Where an agent route crosses the ego path, in each frame's arc length."""

    route_id: str
    route_entry: float
    route_exit: float
    ego_entry: float
    ego_exit: float


class Route:
    """Polyline with cumulative arc length; supports point/heading lookup."""

    def __init__(self, route_id: str, points: np.ndarray):
        if points.ndim != 2 or points.shape[1] != 2 or len(points) < 2:
            raise ValueError("route needs an (n, 2) polyline with n >= 2")
        self.route_id = route_id
        self.points = points.astype(float)
        seg = np.diff(self.points, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0):
            raise ValueError("route polyline has a zero-length segment")
        self.cum_s = np.concatenate([[0.0], np.cumsum(seg_len)])
        self.length = float(self.cum_s[-1])
        self._seg = seg
        self._seg_len = seg_len
        self._seg_heading = np.arctan2(seg[:, 1], seg[:, 0])

    def point_at(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum_s, s, side="right") - 1)
        i = min(i, len(self._seg) - 1)
        t = (s - self.cum_s[i]) / self._seg_len[i]
        return self.points[i] + t * self._seg[i]

    def project(self, xy: np.ndarray) -> tuple[float, float]:
        """(arc length, distance) of the closest polyline point to xy."""
        rel = xy[None, :] - self.points[:-1]
        t = np.einsum("ij,ij->i", rel, self._seg) / (self._seg_len ** 2)
        t = np.clip(t, 0.0, 1.0)
        foot = self.points[:-1] + t[:, None] * self._seg
        dist2 = np.sum((foot - xy[None, :]) ** 2, axis=1)
        i = int(np.argmin(dist2))
        s = float(self.cum_s[i] + t[i] * self._seg_len[i])
        return s, float(math.sqrt(dist2[i]))

    def heading_at(self, s: float) -> float:
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum_s, s, side="right") - 1)
        i = min(i, len(self._seg) - 1)
        return float(self._seg_heading[i])

    def batch_point_heading(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(points (n, 2), headings (n,)) at many arc lengths at once."""
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        i = np.clip(np.searchsorted(self.cum_s, s, side="right") - 1,
                    0, len(self._seg) - 1)
        t = (s - self.cum_s[i]) / self._seg_len[i]
        return self.points[i] + t[:, None] * self._seg[i], self._seg_heading[i]


def _arc_points(center: np.ndarray, radius: float, a0: float, a1: float,
                step: float) -> np.ndarray:
    n = max(2, int(math.ceil(abs(a1 - a0) * radius / step)) + 1)
    ang = np.linspace(a0, a1, n)
    return np.stack([center[0] + radius * np.cos(ang),
                     center[1] + radius * np.sin(ang)], axis=1)


def build_ego_route(geo: GeometryConfig) -> Route:
    """Approach straight, left-turn quarter arc, exit straight."""
    w = geo.lane_width
    half = w / 2.0
    step = geo.sample_step
    # Arc center at the south-west junction corner; radius spans from the
    # stem lane center to the westbound lane center.
    cx, cy = -w, -w
    radius = half + w  # 1.5 * lane_width
    y_start = -w - geo.approach_length

    n_app = max(2, int(math.ceil(geo.approach_length / step)) + 1)
    approach = np.stack([np.full(n_app, half),
                         np.linspace(y_start, -w, n_app)], axis=1)
    arc = _arc_points(np.array([cx, cy]), radius, 0.0, math.pi / 2.0, step)
    n_exit = max(2, int(math.ceil(geo.exit_length / step)) + 1)
    exit_leg = np.stack([np.linspace(-w, -w - geo.exit_length, n_exit),
                         np.full(n_exit, half)], axis=1)
    pts = np.concatenate([approach, arc[1:], exit_leg[1:]], axis=0)
    return Route(EGO_ROUTE, pts)


def build_agent_route(route_id: str, geo: GeometryConfig) -> Route:
    w = geo.lane_width
    half = w / 2.0
    if route_id == FROM_LEFT:
        p0 = np.array([-geo.main_half_length, -half])
        p1 = np.array([geo.overrun_east, -half])
    elif route_id == FROM_RIGHT:
        p0 = np.array([geo.main_half_length, half])
        p1 = np.array([-geo.overrun_west, half])
    else:
        raise ValueError(f"unknown agent route {route_id!r}")
    n = max(2, int(math.ceil(float(np.linalg.norm(p1 - p0)) / geo.sample_step)) + 1)
    pts = np.stack([np.linspace(p0[0], p1[0], n), np.linspace(p0[1], p1[1], n)], axis=1)
    return Route(route_id, pts)


def _proximity_interval(route: Route, ego: Route, radius: float
                        ) -> tuple[float, float, float, float] | None:
    """Route-s and ego-s spans where the two polylines come within radius."""
    d = np.linalg.norm(route.points[:, None, :] - ego.points[None, :, :], axis=2)
    close = d <= radius
    route_any = close.any(axis=1)
    if not route_any.any():
        return None
    r_idx = np.nonzero(route_any)[0]
    e_idx = np.nonzero(close.any(axis=0))[0]
    return (float(route.cum_s[r_idx[0]]), float(route.cum_s[r_idx[-1]]),
            float(ego.cum_s[e_idx[0]]), float(ego.cum_s[e_idx[-1]]))


class Junction:
    """All routes plus conflict zones for one layout."""

    def __init__(self, geo: GeometryConfig, conflict_reach: float = 2.5):
        self.geo = geo
        self.ego_route = build_ego_route(geo)
        self.agent_routes = {rid: build_agent_route(rid, geo) for rid in AGENT_ROUTES}
        # conflict_reach is the centerline distance at which two same-width
        # corridors overlap (vehicle width plus margin). It must stay below
        # the lane spacing or parallel lanes would register as conflicting.
        if conflict_reach >= geo.lane_width:
            raise ValueError("conflict_reach must be smaller than the lane width")
        self.conflict_zones: dict[str, ConflictZone] = {}
        for rid, route in self.agent_routes.items():
            span = _proximity_interval(route, self.ego_route, conflict_reach)
            if span is None:
                raise ValueError(f"route {rid} never meets the ego path")
            self.conflict_zones[rid] = ConflictZone(rid, *span)
        arc_len = math.pi / 2.0 * (geo.lane_width * 1.5)
        self.ego_goal_s = geo.approach_length + arc_len + geo.goal_offset
        if self.ego_goal_s >= self.ego_route.length:
            raise ValueError("goal line fell past the end of the ego route")

    def route(self, route_id: str) -> Route:
        if route_id == EGO_ROUTE:
            return self.ego_route
        return self.agent_routes[route_id]
