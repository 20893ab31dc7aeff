"""Lattice trajectory planner over the curvilinear frame.

Candidates are polynomial trajectories to a fixed grid of end states: a
quintic lateral profile to (offset, 0, 0) and a velocity-keeping longitudinal
profile to (end speed, 0 accel) with the end position left free. The
longitudinal profile is the quartic that minimizes the squared-jerk integral
under those five boundary conditions (the Euler-Lagrange condition forces a
quadratic acceleration, so the quintic term vanishes).

The rule-based policy picks the cheapest candidate that passes collision
checking against constant-velocity straight-line agent predictions, and falls
back to a brake trajectory built from the cheapest candidate's spatial shape
with a jerk-limited deceleration profile that holds the vehicle at rest once
the speed reaches zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .config import PlannerConfig, ScenarioConfig
from .frenet import FrenetState, ReferencePath

KIND_CANDIDATE = "candidate"
KIND_BRAKE = "brake"

# Lateral end offsets are a fixed 7-point grid across the allowed width.
LATERAL_GRID_SIZE = 7


# -- polynomial fits ----------------------------------------------------------

def quintic_coeffs(start: tuple[float, float, float],
                   end: tuple[float, float, float], T: float) -> np.ndarray:
    """Degree-5 coefficients (ascending) meeting both full boundary states."""
    if T <= 0:
        raise ValueError(f"horizon must be positive, got {T}")
    p0, v0, a0 = start
    p1, v1, a1 = end
    c0, c1, c2 = p0, v0, a0 / 2.0
    t2, t3 = T * T, T * T * T
    m = np.array([
        [t3, t2 * t2, t3 * t2],
        [3 * t2, 4 * t3, 5 * t2 * t2],
        [6 * T, 12 * t2, 20 * t3],
    ])
    rhs = np.array([
        p1 - (c0 + c1 * T + c2 * t2),
        v1 - (c1 + 2 * c2 * T),
        a1 - 2 * c2,
    ])
    c3, c4, c5 = np.linalg.solve(m, rhs)
    return np.array([c0, c1, c2, c3, c4, c5])


def quartic_coeffs(start: tuple[float, float, float],
                   end_speed: float, end_accel: float, T: float) -> np.ndarray:
    """Degree-4 coefficients for the free-end-position velocity fit."""
    if T <= 0:
        raise ValueError(f"horizon must be positive, got {T}")
    p0, v0, a0 = start
    c0, c1, c2 = p0, v0, a0 / 2.0
    t2, t3 = T * T, T * T * T
    m = np.array([
        [3 * t2, 4 * t3],
        [6 * T, 12 * t2],
    ])
    rhs = np.array([
        end_speed - (c1 + 2 * c2 * T),
        end_accel - 2 * c2,
    ])
    c3, c4 = np.linalg.solve(m, rhs)
    return np.array([c0, c1, c2, c3, c4])


def jerk_energy(coeffs: np.ndarray, T: float) -> float:
    """Time integral of squared jerk over [0, T], exact."""
    jerk = P.polyder(coeffs, 3)
    if len(jerk) == 0:
        return 0.0
    integral = P.polyint(P.polymul(jerk, jerk))
    return float(P.polyval(T, integral))


# -- trajectories -------------------------------------------------------------

@dataclass
class Trajectory:
    kind: str
    horizon: float
    lat_coeffs: np.ndarray          # donor's for the brake kind
    lon_coeffs: np.ndarray
    end_state: FrenetState
    t: np.ndarray                   # sample times, planner dt resolution
    b: np.ndarray
    db: np.ndarray
    d: np.ndarray
    dd: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    speed: np.ndarray
    _brake: "_BrakeProfile | None" = None

    def state_at(self, time: float) -> FrenetState:
        """Exact trajectory state at an arbitrary time in [0, horizon]."""
        if self._brake is not None:
            return self._brake.state_at(time)
        lat_d1 = P.polyder(self.lat_coeffs, 1)
        lat_d2 = P.polyder(self.lat_coeffs, 2)
        lon_d1 = P.polyder(self.lon_coeffs, 1)
        lon_d2 = P.polyder(self.lon_coeffs, 2)
        return FrenetState(
            b=float(P.polyval(time, self.lon_coeffs)),
            db=float(P.polyval(time, lon_d1)),
            ddb=float(P.polyval(time, lon_d2)),
            d=float(P.polyval(time, self.lat_coeffs)),
            dd=float(P.polyval(time, lat_d1)),
            ddd=float(P.polyval(time, lat_d2)),
            t=time,
        )


class _BrakeProfile:
    """Piecewise-analytic stop along a donor trajectory's spatial shape.

    Longitudinal: acceleration starts at min(current accel, 0), ramps down at
    the jerk limit to the deceleration limit, holds until the speed hits zero,
    then everything freezes. Lateral: the donor's offset profile re-indexed by
    longitudinal progress, so the vehicle traces the donor's path at the brake
    profile's own speed.
    """

    def __init__(self, start: FrenetState, donor: Trajectory,
                 decel: float, jerk: float, fine_step: float = 0.01):
        self.v0 = max(start.db, 0.0)
        self.a0 = min(start.ddb, 0.0)
        self.b0 = start.b
        self.jerk = jerk
        self.decel = decel
        # Phase 1 ends when the ramp reaches the deceleration limit.
        self.t1 = max((self.a0 + decel) / jerk, 0.0)
        self.t_stop = self._solve_stop_time()
        # Donor progress table for the lateral reparameterization. The donor
        # station can stall once its own speed reaches zero; a running max
        # keeps the interpolation table monotone.
        n = int(math.ceil(donor.horizon / fine_step)) + 1
        self._tau = np.linspace(0.0, donor.horizon, n)
        b_fine = P.polyval(self._tau, donor.lon_coeffs)
        self._donor_b = np.maximum.accumulate(b_fine)
        self._donor_lat = donor.lat_coeffs
        self._donor_lat_d1 = P.polyder(donor.lat_coeffs, 1)
        self._donor_lat_d2 = P.polyder(donor.lat_coeffs, 2)
        self._donor_lon_d1 = P.polyder(donor.lon_coeffs, 1)
        self._donor_lon_d2 = P.polyder(donor.lon_coeffs, 2)

    def _kinematics(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(b, v, a) of the longitudinal profile, before the stop clamp."""
        t = np.asarray(t, dtype=float)
        ramp = np.minimum(t, self.t1)
        hold = np.maximum(t - self.t1, 0.0)
        a = self.a0 - self.jerk * ramp
        v = (self.v0 + self.a0 * ramp - 0.5 * self.jerk * ramp ** 2
             + (self.a0 - self.jerk * self.t1) * hold)
        b = (self.b0 + self.v0 * ramp + 0.5 * self.a0 * ramp ** 2
             - self.jerk * ramp ** 3 / 6.0
             + (self.v0 + self.a0 * self.t1 - 0.5 * self.jerk * self.t1 ** 2) * hold
             + 0.5 * (self.a0 - self.jerk * self.t1) * hold ** 2)
        return b, v, a

    def _solve_stop_time(self) -> float:
        if self.v0 <= 0.0:
            return 0.0
        # Try the ramp phase: v(t) = v0 + a0 t - j t^2 / 2 = 0.
        disc = self.a0 ** 2 + 2.0 * self.jerk * self.v0
        t_ramp = (self.a0 + math.sqrt(disc)) / self.jerk
        if t_ramp <= self.t1:
            return t_ramp
        v1 = self.v0 + self.a0 * self.t1 - 0.5 * self.jerk * self.t1 ** 2
        return self.t1 + v1 / self.decel

    def sample(self, t: np.ndarray) -> tuple[np.ndarray, ...]:
        """(b, db, d, dd) arrays at the given times, stop clamp applied."""
        t = np.asarray(t, dtype=float)
        tc = np.minimum(t, self.t_stop)
        b, v, _ = self._kinematics(tc)
        v = np.maximum(v, 0.0)
        tau = np.interp(b, self._donor_b, self._tau)
        d = P.polyval(tau, self._donor_lat)
        donor_v = np.maximum(P.polyval(tau, self._donor_lon_d1), 0.0)
        rate = np.where(donor_v > 1e-9, v / np.where(donor_v > 1e-9, donor_v, 1.0), 0.0)
        dd = P.polyval(tau, self._donor_lat_d1) * rate
        return b, v, d, dd

    def state_at(self, time: float) -> FrenetState:
        tc = min(time, self.t_stop)
        b, v, a = self._kinematics(np.array([tc]))
        b, v, a = float(b[0]), max(float(v[0]), 0.0), float(a[0])
        if time >= self.t_stop:
            v, a = 0.0, 0.0
        tau = float(np.interp(b, self._donor_b, self._tau))
        d = float(P.polyval(tau, self._donor_lat))
        donor_v = max(float(P.polyval(tau, self._donor_lon_d1)), 0.0)
        donor_a = float(P.polyval(tau, self._donor_lon_d2))
        lat_slope = float(P.polyval(tau, self._donor_lat_d1))
        if donor_v > 1e-9:
            rate = v / donor_v
            dd = lat_slope * rate
            # Chain rule for the lateral acceleration through tau(t).
            dtau2 = (a * donor_v - v * donor_a * rate) / donor_v ** 2
            ddd = float(P.polyval(tau, self._donor_lat_d2)) * rate ** 2 + lat_slope * dtau2
        else:
            dd, ddd = 0.0, 0.0
        return FrenetState(b=b, db=v, ddb=a, d=d, dd=dd, ddd=ddd, t=time)


# -- collision geometry -------------------------------------------------------

_LOCAL_CORNERS = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, -1.0], [-1.0, 1.0]])


def rect_corners(x, y, heading, length: float, width: float) -> np.ndarray:
    """Corner coordinates (..., 4, 2) of oriented rectangles."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    heading = np.asarray(heading, dtype=float)
    local = _LOCAL_CORNERS * np.array([length / 2.0, width / 2.0])
    c, s = np.cos(heading), np.sin(heading)
    rot = np.stack([np.stack([c, -s], axis=-1),
                    np.stack([s, c], axis=-1)], axis=-2)
    pts = np.einsum("...ij,kj->...ki", rot, local)
    return pts + np.stack([x, y], axis=-1)[..., None, :]


def rects_overlap(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Separating-axis overlap test for corner arrays (..., 4, 2)."""
    a, b = np.broadcast_arrays(a, b)
    separated = np.zeros(a.shape[:-2], dtype=bool)
    for src in (a, b):
        edges = src[..., 1:3, :] - src[..., 0:2, :]
        axes = edges / np.linalg.norm(edges, axis=-1, keepdims=True)
        pa = np.einsum("...ci,...ai->...ac", a, axes)
        pb = np.einsum("...ci,...ai->...ac", b, axes)
        gap = (pa.max(-1) < pb.min(-1)) | (pb.max(-1) < pa.min(-1))
        separated |= gap.any(-1)
    return ~separated


def collision_check(traj: Trajectory, agents: np.ndarray,
                    scenario: ScenarioConfig, margin: float = 0.0) -> bool:
    """True when the trajectory overlaps any straight-line agent prediction.

    agents: (m, 4) rows of (x, y, heading, speed), each advanced at constant
    speed along its current heading. Checked at every trajectory sample.
    """
    if agents.size == 0:
        return False
    agents = np.asarray(agents, dtype=float).reshape(-1, 4)
    ego = rect_corners(traj.x, traj.y, traj.heading,
                       scenario.vehicle_length + 2 * margin,
                       scenario.vehicle_width + 2 * margin)
    hx = np.cos(agents[:, 2])[:, None]
    hy = np.sin(agents[:, 2])[:, None]
    ax = agents[:, 0][:, None] + agents[:, 3][:, None] * traj.t[None, :] * hx
    ay = agents[:, 1][:, None] + agents[:, 3][:, None] * traj.t[None, :] * hy
    heads = np.broadcast_to(agents[:, 2][:, None], ax.shape)
    other = rect_corners(ax, ay, heads,
                         scenario.vehicle_length, scenario.vehicle_width)
    return bool(rects_overlap(ego[None, :, :, :], other).any())


# -- the planner --------------------------------------------------------------

@dataclass
class ActionSet:
    """One planning cycle's discrete action space."""

    trajectories: list[Trajectory]   # index = action id; last entry is the brake
    costs: np.ndarray                # brake slot holds +inf (never cost-ranked)
    collides: np.ndarray
    baseline_index: int
    start: FrenetState

    @property
    def brake_index(self) -> int:
        return len(self.trajectories) - 1


class LatticePlanner:
    """Stateless candidate generator and rule-based action selector."""

    def __init__(self, path: ReferencePath, cfg: PlannerConfig,
                 scenario: ScenarioConfig):
        cfg.validate()
        self.path = path
        self.cfg = cfg
        self.scenario = scenario
        self.end_grid = self._build_end_grid()
        self.n_actions = cfg.n + 1
        self._t_grid = np.arange(int(round(cfg.t_end * cfg.planning_frequency)) + 1) * cfg.dt

    def _build_end_grid(self) -> list[tuple[float, float]]:
        cfg = self.cfg
        lat = np.linspace(-cfg.max_width, cfg.max_width, LATERAL_GRID_SIZE)
        spd = np.linspace(cfg.min_speed, cfg.max_speed, cfg.speed_grid)
        combos = [(float(d), float(v)) for d in lat for v in spd]
        if cfg.n > len(combos):
            raise ValueError(f"planner.n={cfg.n} exceeds the {len(combos)}-point end grid")
        # Nearest-to-reference preference: small |offset| first, then faster,
        # then the leftward member of an offset pair. Fixes the action ids.
        combos.sort(key=lambda dv: (abs(dv[0]), -dv[1], dv[0]))
        return combos[:cfg.n]

    # -- construction ---------------------------------------------------------

    def _world_arrays(self, b, db, d, dd):
        pts, heads = self.path.route.batch_point_heading(b)
        x = pts[:, 0] - d * np.sin(heads)
        y = pts[:, 1] + d * np.cos(heads)
        speed = np.hypot(db, dd)
        heading = heads + np.where(speed > 1e-9, np.arctan2(dd, db), 0.0)
        heading = np.mod(heading + math.pi, 2 * math.pi) - math.pi
        return x, y, heading, speed

    def _candidate(self, start: FrenetState, d_end: float, v_end: float) -> Trajectory:
        T = self.cfg.t_end
        lat = quintic_coeffs((start.d, start.dd, start.ddd), (d_end, 0.0, 0.0), T)
        lon = quartic_coeffs((start.b, start.db, start.ddb), v_end, 0.0, T)
        t = self._t_grid
        b = P.polyval(t, lon)
        db = P.polyval(t, P.polyder(lon, 1))
        d = P.polyval(t, lat)
        dd = P.polyval(t, P.polyder(lat, 1))
        x, y, heading, speed = self._world_arrays(b, db, d, dd)
        end = FrenetState(b=float(P.polyval(T, lon)), db=v_end, ddb=0.0,
                          d=d_end, dd=0.0, ddd=0.0, t=T)
        return Trajectory(KIND_CANDIDATE, T, lat, lon, end, t, b, db, d, dd,
                          x, y, heading, speed)

    def _brake(self, start: FrenetState, donor: Trajectory) -> Trajectory:
        profile = _BrakeProfile(start, donor, self.cfg.brake_decel, self.cfg.brake_jerk)
        t = self._t_grid
        b, db, d, dd = profile.sample(t)
        x, y, heading, speed = self._world_arrays(b, db, d, dd)
        traj = Trajectory(KIND_BRAKE, self.cfg.t_end, donor.lat_coeffs,
                          donor.lon_coeffs, profile.state_at(self.cfg.t_end),
                          t, b, db, d, dd, x, y, heading, speed, _brake=profile)
        return traj

    def cost(self, traj: Trajectory) -> float:
        if traj.kind == KIND_BRAKE:
            return math.inf
        cfg = self.cfg
        jerk = jerk_energy(traj.lat_coeffs, traj.horizon) + \
            jerk_energy(traj.lon_coeffs, traj.horizon)
        end = traj.end_state
        terminal = end.d ** 2 + (end.db - cfg.desired_speed) ** 2
        return cfg.k_j * jerk + cfg.k_t * traj.horizon + cfg.k_p * terminal

    # -- planning -------------------------------------------------------------

    def plan(self, start: FrenetState, agents: np.ndarray) -> ActionSet:
        candidates = [self._candidate(start, d, v) for d, v in self.end_grid]
        costs = np.array([self.cost(c) for c in candidates])
        # Donor for the brake: cheapest candidate ignoring collisions.
        order = sorted(range(len(candidates)),
                       key=lambda i: (costs[i], abs(self.end_grid[i][0]), i))
        brake = self._brake(start, candidates[order[0]])
        trajectories = candidates + [brake]
        collides = np.array([collision_check(tr, agents, self.scenario,
                                             self.cfg.check_margin)
                             for tr in trajectories])
        safe = [i for i in order if not collides[i]]
        baseline = safe[0] if safe else len(trajectories) - 1
        return ActionSet(trajectories, np.append(costs, math.inf),
                         collides, baseline, start)

    def start_state(self, prev: Trajectory | None, xy: np.ndarray,
                    speed: float, heading: float, accel: float = 0.0) -> FrenetState:
        """Continuity seed: the previous choice's state one step in, else a
        fresh projection of the measured world state."""
        if prev is not None:
            return prev.state_at(self.cfg.dt)
        return self.path.to_frenet(np.asarray(xy, dtype=float), speed, heading, accel)

    def baseline_action(self, start: FrenetState, agents: np.ndarray) -> Trajectory:
        acts = self.plan(start, agents)
        return acts.trajectories[acts.baseline_index]
