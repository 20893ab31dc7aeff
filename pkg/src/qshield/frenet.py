"""Curvilinear (station/offset) frame anchored to the ego reference path.

The reference line is the sampled ego route polyline. Station s runs along it,
offset d is signed perpendicular distance (positive to the left of travel).
Projection is segment-wise exact: the query point is projected onto each
polyline segment and the nearest hit wins, so round trips are limited only by
the polyline's resolution of the true curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Route

# Beyond this lateral distance the frame is ambiguous (arc center side) and
# the vehicle has left anything the planner can reason about.
CORRIDOR_HALF_WIDTH = 10.0


class OutOfCorridorError(ValueError):
    """The query point is too far from the reference line to project."""


@dataclass(frozen=True)
class FrenetState:
    """Planar kinematic state expressed along the reference line.

    b is station, db/ddb its time derivatives; d is lateral offset with
    derivatives taken against time as well. t is the trajectory-relative time
    the state belongs to (0 for states measured from the world).
    """

    b: float
    db: float
    ddb: float
    d: float
    dd: float
    ddd: float
    t: float = 0.0


class ReferencePath:
    def __init__(self, route: Route):
        self.route = route
        self.points = route.points
        self.cum_s = route.cum_s
        self.length = route.length
        seg = np.diff(self.points, axis=0)
        self._seg = seg
        self._seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self._tangent = seg / self._seg_len[:, None]
        # Left normal of each segment; offset d is measured along it.
        self._normal = np.stack([-self._tangent[:, 1], self._tangent[:, 0]], axis=1)

    # -- projection ---------------------------------------------------------

    def project(self, xy: np.ndarray) -> tuple[float, float]:
        """Return (s, d) of the closest point on the polyline."""
        rel = xy[None, :] - self.points[:-1]
        t = np.einsum("ij,ij->i", rel, self._seg) / (self._seg_len ** 2)
        t = np.clip(t, 0.0, 1.0)
        foot = self.points[:-1] + t[:, None] * self._seg
        dist2 = np.sum((foot - xy[None, :]) ** 2, axis=1)
        i = int(np.argmin(dist2))
        s = float(self.cum_s[i] + t[i] * self._seg_len[i])
        d = float(np.dot(xy - foot[i], self._normal[i]))
        if abs(d) > CORRIDOR_HALF_WIDTH:
            raise OutOfCorridorError(
                f"point {xy.tolist()} is {abs(d):.1f} m off the reference line")
        return s, d

    def point_heading(self, s: float) -> tuple[np.ndarray, float]:
        return self.route.point_at(s), self.route.heading_at(s)

    # -- frame conversions ---------------------------------------------------

    def to_world(self, s: float, d: float) -> np.ndarray:
        p, h = self.point_heading(s)
        return p + d * np.array([-math.sin(h), math.cos(h)])

    def to_frenet(self, xy: np.ndarray, speed: float, heading: float,
                  accel: float = 0.0) -> FrenetState:
        """Project a world kinematic state into the frame.

        Acceleration is split by the same heading decomposition as velocity;
        curvature coupling is ignored, which is fine at the speeds involved.
        """
        s, d = self.project(xy)
        ref_h = self.route.heading_at(s)
        dh = heading - ref_h
        return FrenetState(
            b=s, db=speed * math.cos(dh), ddb=accel * math.cos(dh),
            d=d, dd=speed * math.sin(dh), ddd=accel * math.sin(dh),
        )

    def from_frenet(self, fs: FrenetState) -> tuple[np.ndarray, float, float]:
        """Return (xy, heading, speed) for a frame state."""
        p, h = self.point_heading(fs.b)
        xy = p + fs.d * np.array([-math.sin(h), math.cos(h)])
        speed = math.hypot(fs.db, fs.dd)
        if speed > 1e-9:
            heading = h + math.atan2(fs.dd, fs.db)
        else:
            heading = h
        return xy, heading, speed
