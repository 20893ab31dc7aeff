"""Configuration for the simulator, planner, value ensemble, and gate.

All defaults are the tuned desk-scale values. Configs load from a JSON file
whose top-level keys are the section names (``scenario``, ``planner``,
``train``, ``gate``, ``run``); unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

KMH = 1.0 / 3.6  # km/h -> m/s


@dataclass
class GeometryConfig:
    """T-junction layout. The main road runs along x, the stem points south.

    Lane centers sit at +/- lane_width/2 off the road axes. The ego lane is
    the northbound stem lane; its reference path turns left through a quarter
    arc onto the westbound main lane.
    """

    lane_width: float = 3.5
    approach_length: float = 16.0   # straight stem run before the turn arc
    exit_length: float = 26.0       # straight run after the arc
    main_half_length: float = 30.0  # agent spawn distance from junction center
    overrun_east: float = 16.0      # how far past center the eastbound route continues
    overrun_west: float = 16.0      # how far past center the westbound route continues
    goal_offset: float = 8.0        # goal line, meters past the arc end along the exit
    sample_step: float = 0.35       # polyline sampling step, must stay < 0.5

    def validate(self) -> None:
        if self.sample_step >= 0.5:
            raise ConfigError("geometry.sample_step must be < 0.5 m")
        for name in ("lane_width", "approach_length", "exit_length",
                     "main_half_length", "goal_offset"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"geometry.{name} must be positive")
        if self.goal_offset >= self.exit_length:
            raise ConfigError("geometry.goal_offset must lie inside the exit leg")


@dataclass
class ScenarioConfig:
    """Episode-level simulator settings."""

    seed: int = 0
    m_max: int = 4                      # max simultaneous agents (and observation slots)
    spawn_rate: float = 1.5             # per-route arrival rate is half this, veh/s
    agent_speed_range: tuple[float, float] = (4.5, 7.0)  # desired speeds, m/s
    ego_start_speed: float = 5.0
    dt: float = 0.1                     # = 1 / planning frequency (10 Hz)
    episode_timeout: float = 45.0
    v_stop: float = 0.1                 # below this the stop timer runs
    stuck_time: float = 5.0             # continuous stop time that ends the episode
    yield_decel: float = 5.0            # braking rate of agents conceding the junction
    vehicle_length: float = 4.5
    vehicle_width: float = 2.0
    reward_collision: float = 0.0
    reward_success: float = 1.0
    reward_stuck: float = 0.0
    continuity_tol_pos: float = 0.5     # step() precondition tolerances
    continuity_tol_speed: float = 1.0
    geometry: GeometryConfig = field(default_factory=GeometryConfig)

    def validate(self) -> None:
        self.geometry.validate()
        if self.dt <= 0:
            raise ConfigError("scenario.dt must be positive")
        if abs(self.dt - 0.1) > 1e-12:
            # planning frequency is pinned at 10 Hz
            raise ConfigError("scenario.dt must equal 0.1 s (10 Hz planning)")
        if self.m_max < 0:
            raise ConfigError("scenario.m_max must be >= 0")
        lo, hi = self.agent_speed_range
        if not (0 < lo <= hi):
            raise ConfigError("scenario.agent_speed_range must satisfy 0 < lo <= hi")
        if self.spawn_rate < 0:
            raise ConfigError("scenario.spawn_rate must be >= 0")
        if self.yield_decel <= 0:
            raise ConfigError("scenario.yield_decel must be positive")


@dataclass
class PlannerConfig:
    """Lattice planner parameters. Key names mirror the planner symbols."""

    n: int = 7                          # candidate count (brake excluded)
    max_width: float = 2.0              # lateral end-offset limit, m
    max_speed: float = 25.0 * KMH       # end-speed sampling ceiling, m/s
    min_speed: float = 0.0
    t_end: float = 6.0                  # candidate horizon, s
    k_j: float = 0.1                    # jerk weight
    k_t: float = 0.1                    # horizon weight
    k_p: float = 1.0                    # terminal-state weight
    planning_frequency: float = 10.0
    speed_grid: int = 3                 # end-speed samples crossed with the lateral grid
    desired_speed: float = 25.0 * KMH   # terminal speed-deviation reference
    brake_decel: float = 4.0            # brake trajectory deceleration, m/s^2
    brake_jerk: float = 10.0            # brake trajectory jerk limit, m/s^3
    check_margin: float = 1.2           # footprint inflation for collision checking, m

    @property
    def dt(self) -> float:
        return 1.0 / self.planning_frequency

    @property
    def n_actions(self) -> int:
        return self.n + 1

    def validate(self) -> None:
        if self.n < 1 or self.speed_grid < 1:
            raise ConfigError("planner.n and planner.speed_grid must be >= 1")
        if self.t_end <= 0 or self.planning_frequency <= 0:
            raise ConfigError("planner.t_end and planner.planning_frequency must be positive")
        if self.max_speed < self.min_speed:
            raise ConfigError("planner.max_speed must be >= planner.min_speed")
        if min(self.k_j, self.k_t, self.k_p) < 0:
            raise ConfigError("planner cost weights must be >= 0")


@dataclass
class TrainConfig:
    """Value-ensemble and training-loop parameters."""

    n_e: int = 10                       # ensemble heads
    hidden: tuple[int, ...] = (128, 128, 64)
    learning_rate: float = 5e-4
    gamma: float = 0.995
    batch_size: int = 64
    target_sync_period: int = 100       # training steps between target copies
    k_e: float = 0.01                   # epsilon inside the greedy exploration branch
    sigma_thres: float = 0.05
    p_share: float = 0.8                # bootstrap mask Bernoulli probability
    buffer_capacity: int = 100_000
    priority_exponent: float = 0.6
    is_exponent_start: float = 0.4      # importance-sampling exponent, annealed to 1.0
    is_exponent_final: float = 1.0
    epsilon_priority: float = 1e-3
    divergence_q: float = 1e3           # abort when any |Q| in a batch exceeds this

    def validate(self) -> None:
        if self.n_e < 1:
            raise ConfigError("train.n_e must be >= 1")
        if len(self.hidden) != 3:
            raise ConfigError("train.hidden must list the three hidden widths")
        if not 0.0 <= self.p_share <= 1.0:
            raise ConfigError("train.p_share must be in [0, 1]")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ConfigError("train.buffer_capacity must be >= train.batch_size >= 1")
        if self.target_sync_period < 1:
            raise ConfigError("train.target_sync_period must be >= 1")


@dataclass
class GateConfig:
    """Activation thresholds for the learned policy."""

    p_thres: float = 0.4
    n_thres: int = 40
    sigma_thres: float = 0.05
    k_e: float = 0.01

    def validate(self) -> None:
        if not 0.0 <= self.p_thres <= 1.0:
            raise ConfigError("gate.p_thres must be in [0, 1]")
        if self.n_thres < 0:
            raise ConfigError("gate.n_thres must be >= 0")


@dataclass
class RunConfig:
    """Training-run and evaluation orchestration."""

    total_steps: int = 300_000
    checkpoint_every: int = 50_000
    eval_episodes: int = 200            # desk-scale default; 1000 for the full protocol
    timeout_counts_as_stuck: bool = True

    def validate(self) -> None:
        if self.total_steps < 0 or self.checkpoint_every < 1:
            raise ConfigError("run.total_steps must be >= 0 and run.checkpoint_every >= 1")


@dataclass
class Config:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    gate: GateConfig = field(default_factory=GateConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def validate(self) -> "Config":
        for section in (self.scenario, self.planner, self.train, self.gate, self.run):
            section.validate()
        return self


class ConfigError(ValueError):
    """Invalid configuration value or malformed config file."""


def _to_plain(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_to_plain(v) for v in obj]
    return obj


def _from_plain(cls: type, data: dict[str, Any]) -> Any:
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for name, value in data.items():
        f = fields[name]
        if dataclasses.is_dataclass(f.type) or f.type in (GeometryConfig,) or name == "geometry":
            kwargs[name] = _from_plain(GeometryConfig, value)
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


_SECTIONS = {
    "scenario": ScenarioConfig,
    "planner": PlannerConfig,
    "train": TrainConfig,
    "gate": GateConfig,
    "run": RunConfig,
}


def config_to_dict(cfg: Config) -> dict[str, Any]:
    return {name: _to_plain(getattr(cfg, name)) for name in _SECTIONS}


def config_from_dict(data: dict[str, Any]) -> Config:
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {name: _from_plain(cls, data.get(name, {})) for name, cls in _SECTIONS.items()}
    return Config(**kwargs).validate()


def load_config(path: str | Path) -> Config:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from exc
    return config_from_dict(data)


def save_config(cfg: Config, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
