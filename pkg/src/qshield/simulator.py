"""Seeded T-junction simulator.

The ego vehicle follows planned trajectories exactly (one planner interval per
step). Surrounding agents do car-following along fixed straight routes with
per-agent parameters drawn at spawn time. Main-road traffic has priority:
agents concede to the ego only once it is established in their lane ahead of
them (direct car following) or its footprint already occupies the shared
conflict zone (a hard yield brake short of the zone). An approaching ego gets
no courtesy, so committing into a too-small gap collides.

Episodes end on the first of: footprint collision, goal-line crossing,
a continuous full stop of stuck_time seconds, or the wall-clock timeout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import ScenarioConfig
from .frenet import ReferencePath
from .geometry import AGENT_ROUTES, Junction, Route
from .lattice import Trajectory, rect_corners, rects_overlap

TERMINAL_NONE = "none"
TERMINAL_SUCCESS = "success"
TERMINAL_COLLISION = "collision"
TERMINAL_STUCK = "stuck"
TERMINAL_TIMEOUT = "timeout"

# Lateral closeness (m) at which the ego counts as established in an agent's
# lane and becomes a direct car-following leader.
EGO_ON_LANE_DIST = 2.0
MIN_GAP = 2.0  # IDM standstill gap s0, m


class ContinuityError(ValueError):
    """Chosen trajectory does not start at the ego's current state."""


class MalformedActionError(ValueError):
    """Chosen trajectory cannot cover one planning interval."""


@dataclass
class EgoState:
    x: float
    y: float
    heading: float
    speed: float
    accel: float


@dataclass
class AgentState:
    x: float
    y: float
    heading: float
    speed: float
    route_id: str
    s: float                 # progress along the route, m
    desired_speed: float
    time_gap: float
    max_accel: float
    comfort_decel: float


@dataclass
class WorldState:
    ego: EgoState
    agents: list[AgentState]
    sim_time: float
    stop_timer: float
    ego_b: float             # ego progress along its reference path


@dataclass
class StepOutcome:
    next: WorldState
    reward: float
    terminal: str


def _sort_agents(agents: list[AgentState]) -> list[AgentState]:
    order = {rid: i for i, rid in enumerate(AGENT_ROUTES)}
    return sorted(agents, key=lambda a: (order[a.route_id], a.s))


def agent_array(world: WorldState) -> np.ndarray:
    """(m, 4) rows of (x, y, heading, speed) for the planner."""
    if not world.agents:
        return np.empty((0, 4))
    return np.array([[a.x, a.y, a.heading, a.speed] for a in world.agents])


# -- observation --------------------------------------------------------------

@dataclass(frozen=True)
class ObservationScales:
    """Geometry-derived bounds mapping raw state into [-1, 1]."""

    x: float
    y: float
    heading: float
    speed: float

    @staticmethod
    def from_config(cfg: ScenarioConfig) -> "ObservationScales":
        geo = cfg.geometry
        x_bound = geo.main_half_length
        y_bound = geo.lane_width + max(geo.approach_length, geo.lane_width)
        speed_bound = max(cfg.agent_speed_range[1], 10.0)
        return ObservationScales(x_bound, y_bound, math.pi, speed_bound)


def observation_size(cfg: ScenarioConfig) -> int:
    return 4 + 5 * cfg.m_max


def observe(world: WorldState, cfg: ScenarioConfig) -> np.ndarray:
    """Flat normalized state vector: ego block then m_max agent blocks.

    Blocks are (x, y, heading, speed) for the ego and (x, y, heading, speed,
    present) per agent slot, every entry clipped into [-1, 1]. Absent slots
    are zero. Slot order follows the world's (route, progress) agent order.
    """
    sc = ObservationScales.from_config(cfg)
    out = np.zeros(observation_size(cfg))
    e = world.ego
    out[0:4] = (e.x / sc.x, e.y / sc.y, e.heading / sc.heading, e.speed / sc.speed)
    for slot, a in enumerate(world.agents[:cfg.m_max]):
        base = 4 + 5 * slot
        out[base:base + 5] = (a.x / sc.x, a.y / sc.y, a.heading / sc.heading,
                              a.speed / sc.speed, 1.0)
    return np.clip(out, -1.0, 1.0)


# -- the simulator ------------------------------------------------------------

class TJunctionSim:
    """One episode runner; create one per worker, reseed per episode."""

    def __init__(self, cfg: ScenarioConfig):
        cfg.validate()
        self.cfg = cfg
        self.junction = Junction(cfg.geometry,
                                 conflict_reach=cfg.vehicle_width + 0.5)
        self.path = ReferencePath(self.junction.ego_route)
        self.rng = np.random.default_rng(cfg.seed)
        self.world: WorldState | None = None

    # -- episode setup --------------------------------------------------------

    def reset(self, seed: int | list[int] | None = None) -> WorldState:
        entropy = self.cfg.seed if seed is None else seed
        self.rng = np.random.default_rng(np.random.SeedSequence(entropy))
        ego_b = 0.0
        xy, heading = self.path.point_heading(ego_b)
        ego = EgoState(float(xy[0]), float(xy[1]), heading,
                       self.cfg.ego_start_speed, 0.0)
        agents: list[AgentState] = []
        for rid in AGENT_ROUTES:
            agents.extend(self._warm_spawn(rid, self.cfg.m_max - len(agents)))
        self.world = WorldState(ego, _sort_agents(agents), 0.0, 0.0, ego_b)
        return self.world

    def _draw_agent(self, rid: str, s: float, speed: float | None = None) -> AgentState:
        route = self.junction.route(rid)
        desired = float(self.rng.uniform(*self.cfg.agent_speed_range))
        agent = AgentState(
            x=0.0, y=0.0, heading=0.0,
            speed=desired if speed is None else speed,
            route_id=rid, s=s,
            desired_speed=desired,
            time_gap=float(self.rng.uniform(1.2, 2.0)),
            max_accel=float(self.rng.uniform(1.5, 2.5)),
            comfort_decel=float(self.rng.uniform(2.0, 3.0)),
        )
        self._place(agent, route)
        return agent

    def _warm_spawn(self, rid: str, budget: int) -> list[AgentState]:
        """Populate a route as if arrivals had been flowing before t=0."""
        cfg = self.cfg
        span = cfg.geometry.main_half_length * 0.9
        mean_speed = 0.5 * (cfg.agent_speed_range[0] + cfg.agent_speed_range[1])
        lam = 0.5 * cfg.spawn_rate * span / mean_speed
        k = min(int(self.rng.poisson(lam)), max(budget, 0))
        if k == 0:
            return []
        positions = np.sort(self.rng.uniform(0.0, span, size=k))[::-1]
        agents = []
        front = math.inf
        for pos in positions:
            agent = self._draw_agent(rid, float(pos))
            spacing = self.cfg.vehicle_length + MIN_GAP + agent.speed * agent.time_gap
            if agent.s > front - spacing:
                agent.s = front - spacing
            if agent.s < 0.0:
                break
            self._place(agent, self.junction.route(rid))
            agents.append(agent)
            front = agent.s
        return agents

    def _place(self, agent: AgentState, route: Route) -> None:
        xy = route.point_at(agent.s)
        agent.x, agent.y = float(xy[0]), float(xy[1])
        agent.heading = route.heading_at(agent.s)

    # -- agent behavior -------------------------------------------------------

    def _idm_accel(self, agent: AgentState, gap: float, lead_speed: float) -> float:
        v = agent.speed
        free = 1.0 - (v / agent.desired_speed) ** 4
        gap = max(gap, 0.1)
        star = MIN_GAP + max(
            0.0, v * agent.time_gap + v * (v - lead_speed)
            / (2.0 * math.sqrt(agent.max_accel * agent.comfort_decel)))
        return agent.max_accel * (free - (star / gap) ** 2)

    def _ego_on_route(self, ego: EgoState, route: Route) -> tuple[float, float] | None:
        s, dist = route.project(np.array([ego.x, ego.y]))
        if dist > EGO_ON_LANE_DIST:
            return None
        lead_speed = max(0.0, ego.speed * math.cos(ego.heading - route.heading_at(s)))
        return s, lead_speed

    def _ego_claims_zone(self, world: WorldState, rid: str) -> bool:
        zone = self.junction.conflict_zones[rid]
        half = self.cfg.vehicle_length / 2.0
        return world.ego_b + half >= zone.ego_entry \
            and world.ego_b - half <= zone.ego_exit

    def _agent_accel(self, agent: AgentState, world: WorldState,
                     leaders: dict[str, list[AgentState]]) -> float:
        route = self.junction.route(agent.route_id)
        length = self.cfg.vehicle_length
        accels = [agent.max_accel * (1.0 - (agent.speed / agent.desired_speed) ** 4)]
        # Same-route predecessor.
        ahead = [o for o in leaders[agent.route_id] if o.s > agent.s]
        if ahead:
            lead = min(ahead, key=lambda o: o.s)
            accels.append(self._idm_accel(agent, lead.s - agent.s - length, lead.speed))
        # Ego established in this lane ahead of the agent.
        on_route = self._ego_on_route(world.ego, route)
        if on_route is not None and on_route[0] > agent.s:
            accels.append(self._idm_accel(agent, on_route[0] - agent.s - length,
                                          on_route[1]))
        # Otherwise brake hard short of the conflict zone while the ego
        # occupies it. A flat-out stop, not a comfort IDM approach: the
        # planner's constant-velocity prediction is wrong exactly as long as
        # the agent is still moving, so the concession must be quick. An agent
        # too close to stop in time spills into the zone regardless; barging
        # into such a gap stays dangerous.
        elif agent.s + length / 2.0 < self.junction.conflict_zones[agent.route_id].route_entry \
                and self._ego_claims_zone(world, agent.route_id):
            accels.append(-self.cfg.yield_decel)
        return min(accels)

    def _advance_agents(self, world: WorldState) -> list[AgentState]:
        dt = self.cfg.dt
        by_route: dict[str, list[AgentState]] = {rid: [] for rid in AGENT_ROUTES}
        for a in world.agents:
            by_route[a.route_id].append(a)
        moved = []
        for a in world.agents:
            acc = self._agent_accel(a, world, by_route)
            nxt = replace(a)
            nxt.speed = max(0.0, a.speed + acc * dt)
            nxt.s = a.s + nxt.speed * dt
            route = self.junction.route(a.route_id)
            if nxt.s <= route.length:
                self._place(nxt, route)
                moved.append(nxt)
        return moved

    def _spawn_arrivals(self, agents: list[AgentState]) -> None:
        cfg = self.cfg
        p = 0.5 * cfg.spawn_rate * cfg.dt
        for rid in AGENT_ROUTES:
            arrived = bool(self.rng.random() < p)
            if not arrived or len(agents) >= cfg.m_max:
                continue  # arrivals at the population cap are dropped
            same = [a.s for a in agents if a.route_id == rid]
            if same and min(same) < cfg.vehicle_length + 2.0 * MIN_GAP:
                continue  # entrance blocked
            agents.append(self._draw_agent(rid, 0.0))

    # -- stepping -------------------------------------------------------------

    def step(self, chosen: Trajectory) -> StepOutcome:
        if self.world is None:
            raise RuntimeError("call reset() before step()")
        world = self.world
        cfg = self.cfg
        if chosen.horizon < cfg.dt or len(chosen.t) < 2:
            raise MalformedActionError("trajectory shorter than one planning interval")
        if math.hypot(chosen.x[0] - world.ego.x, chosen.y[0] - world.ego.y) \
                > cfg.continuity_tol_pos or \
                abs(chosen.speed[0] - world.ego.speed) > cfg.continuity_tol_speed:
            raise ContinuityError("trajectory does not start at the ego state")

        fs = chosen.state_at(cfg.dt)
        ego = EgoState(float(chosen.x[1]), float(chosen.y[1]),
                       float(chosen.heading[1]), float(chosen.speed[1]),
                       math.hypot(fs.ddb, fs.ddd) * (1.0 if fs.ddb >= 0 else -1.0))
        agents = self._advance_agents(world)
        self._spawn_arrivals(agents)
        agents = _sort_agents(agents)

        nxt = WorldState(
            ego=ego, agents=agents,
            sim_time=world.sim_time + cfg.dt,
            stop_timer=(world.stop_timer + cfg.dt) if ego.speed < cfg.v_stop else 0.0,
            ego_b=fs.b,
        )

        terminal = TERMINAL_NONE
        if self._ego_collides(nxt):
            terminal = TERMINAL_COLLISION
        elif nxt.ego_b >= self.junction.ego_goal_s:
            terminal = TERMINAL_SUCCESS
        elif nxt.stop_timer >= cfg.stuck_time:
            terminal = TERMINAL_STUCK
        elif nxt.sim_time >= cfg.episode_timeout:
            terminal = TERMINAL_TIMEOUT

        reward = {TERMINAL_COLLISION: cfg.reward_collision,
                  TERMINAL_SUCCESS: cfg.reward_success,
                  TERMINAL_STUCK: cfg.reward_stuck}.get(terminal, 0.0)
        self.world = nxt
        return StepOutcome(nxt, reward, terminal)

    def _ego_collides(self, world: WorldState) -> bool:
        if not world.agents:
            return False
        cfg = self.cfg
        e = world.ego
        ego_rect = rect_corners(e.x, e.y, e.heading,
                                cfg.vehicle_length, cfg.vehicle_width)
        arr = agent_array(world)
        rects = rect_corners(arr[:, 0], arr[:, 1], arr[:, 2],
                             cfg.vehicle_length, cfg.vehicle_width)
        return bool(rects_overlap(ego_rect[None, :, :], rects).any())
