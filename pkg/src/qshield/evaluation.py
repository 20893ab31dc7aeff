"""Checkpoint evaluation: success rate, activation share, sweeps, probes.

Three policies can drive an episode: "baseline" (the planner alone), "gated"
(the learned proposal executed only when the gate accepts), and "learned"
(the ensemble vote executed unconditionally, for ablation). Episode seeds
derive from the master seed and the episode index, so every policy and every
checkpoint sees the same arrival streams: rows of a sweep differ only through
the swept parameter.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Config, GateConfig
from .counts import CountIndex
from .frenet import ReferencePath
from .gate import SOURCE_BASELINE, SOURCE_DRL, decide, drl_action
from .lattice import LatticePlanner
from .network import EnsembleNet, ensemble_forward, head_stats
from .simulator import (TERMINAL_COLLISION, TERMINAL_NONE, TERMINAL_STUCK,
                        TERMINAL_SUCCESS, TERMINAL_TIMEOUT, TJunctionSim,
                        agent_array, observe)
from .training import EVAL_EPISODE_STREAM, episode_seed

POLICY_BASELINE = "baseline"
POLICY_GATED = "gated"
POLICY_LEARNED = "learned"
POLICIES = (POLICY_BASELINE, POLICY_GATED, POLICY_LEARNED)


def success_rate(collisions: int, stucks: int, episodes: int) -> float:
    """Fraction of attempts that ended neither in a collision nor stuck."""
    return 1.0 - (collisions + stucks) / episodes


@dataclass
class EvalReport:
    policy: str
    episodes: int
    successes: int
    collisions: int
    stucks: int
    timeouts: int
    p_s: float                    # timeouts folded into stucks when configured
    p_s_strict: float             # collisions and stucks only
    activation_proportion: float
    decision_steps: int
    drl_steps: int
    master_seed: int
    per_episode: list[dict]

    def validate(self) -> None:
        if self.successes + self.collisions + self.stucks + self.timeouts \
                != self.episodes:
            raise AssertionError("episode outcomes do not partition the total")
        if abs(self.p_s_strict - success_rate(self.collisions, self.stucks,
                                              self.episodes)) > 1e-12:
            raise AssertionError("success-rate arithmetic drifted")

    def to_json(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    CSV_HEADER = ("policy,episodes,successes,collisions,stucks,timeouts,"
                  "p_s,p_s_strict,activation_proportion")

    def csv_row(self) -> str:
        return (f"{self.policy},{self.episodes},{self.successes},"
                f"{self.collisions},{self.stucks},{self.timeouts},"
                f"{self.p_s!r},{self.p_s_strict!r},{self.activation_proportion!r}")


class PolicyRunner:
    """Reusable episode driver over a frozen ensemble and count table."""

    def __init__(self, cfg: Config, ensemble: EnsembleNet | None = None,
                 counts: CountIndex | None = None,
                 gate_cfg: GateConfig | None = None):
        cfg.validate()
        self.cfg = cfg
        self.sim = TJunctionSim(cfg.scenario)
        self.path = ReferencePath(self.sim.junction.ego_route)
        self.planner = LatticePlanner(self.path, cfg.planner, cfg.scenario)
        self.ensemble = ensemble
        self.counts = counts
        self.gate_cfg = gate_cfg or cfg.gate

    def run_episode(self, policy: str, seed, collect_actions: bool = False,
                    collect_decisions: bool = False,
                    collect_trace: bool = False) -> dict:
        if policy != POLICY_BASELINE and self.ensemble is None:
            raise ValueError(f"policy {policy!r} needs a loaded checkpoint")
        world = self.sim.reset(seed)
        prev = None
        steps = 0
        decision_steps = 0
        drl_steps = 0
        actions: list[int] = []
        decisions: list[dict] = []
        trace: list[dict] = []
        terminal = TERMINAL_NONE
        while True:
            obs = observe(world, self.cfg.scenario)
            ego = world.ego
            start = self.planner.start_state(
                prev, np.array([ego.x, ego.y]), ego.speed, ego.heading, ego.accel)
            acts = self.planner.plan(start, agent_array(world))
            a_rb = acts.baseline_index
            decision_steps += 1
            if policy == POLICY_BASELINE:
                action, source = a_rb, SOURCE_BASELINE
                record = {"source": source, "action": action,
                          "baseline_action": a_rb}
            else:
                q = ensemble_forward(self.ensemble, obs)
                if policy == POLICY_LEARNED:
                    action, source = drl_action(q, a_rb), SOURCE_DRL
                    record = {"source": source, "action": action,
                              "baseline_action": a_rb}
                else:
                    dec = decide(q, obs, a_rb, self.counts, self.gate_cfg)
                    action, source = dec.action, dec.source
                    record = {
                        "source": dec.source, "action": dec.action,
                        "baseline_action": dec.baseline_action,
                        "drl_action": dec.drl_action, "p_o": dec.p_o,
                        "mean_gap": dec.mean_gap, "count_rl": dec.count_rl,
                        "count_rb": dec.count_rb, "sigma_rl": dec.sigma_rl,
                        "sigma_rb": dec.sigma_rb,
                    }
            if source == SOURCE_DRL:
                drl_steps += 1
            outcome = self.sim.step(acts.trajectories[action])
            if collect_actions:
                actions.append(action)
            if collect_decisions:
                record["step"] = steps
                decisions.append(record)
            if collect_trace:
                trace.append({"step": steps, "state": obs.tolist(),
                              "action": action, "reward": outcome.reward,
                              "terminal": outcome.terminal})
            steps += 1
            prev = acts.trajectories[action]
            world = outcome.next
            if outcome.terminal != TERMINAL_NONE:
                terminal = outcome.terminal
                break
        out = {"terminal": terminal, "steps": steps,
               "decision_steps": decision_steps, "drl_steps": drl_steps}
        if collect_actions:
            out["actions"] = actions
        if collect_decisions:
            out["decisions"] = decisions
        if collect_trace:
            out["trace"] = trace
        return out


def evaluate(cfg: Config, policy: str, master_seed: int, episodes: int,
             ensemble: EnsembleNet | None = None,
             counts: CountIndex | None = None,
             gate_cfg: GateConfig | None = None,
             collect_actions: bool = False,
             decision_sink=None) -> EvalReport:
    """Fresh seeded episodes under one policy; shared seeds across callers."""
    runner = PolicyRunner(cfg, ensemble, counts, gate_cfg)
    tally = {TERMINAL_SUCCESS: 0, TERMINAL_COLLISION: 0,
             TERMINAL_STUCK: 0, TERMINAL_TIMEOUT: 0}
    per_episode = []
    decision_steps = 0
    drl_steps = 0
    want_decisions = decision_sink is not None
    for ep in range(episodes):
        result = runner.run_episode(
            policy, episode_seed(master_seed, EVAL_EPISODE_STREAM, ep),
            collect_actions=collect_actions, collect_decisions=want_decisions)
        tally[result["terminal"]] += 1
        decision_steps += result["decision_steps"]
        drl_steps += result["drl_steps"]
        row = {"episode": ep, "terminal": result["terminal"],
               "steps": result["steps"], "drl_steps": result["drl_steps"]}
        if collect_actions:
            row["actions"] = result["actions"]
        per_episode.append(row)
        if want_decisions:
            for record in result["decisions"]:
                record["episode"] = ep
                decision_sink(record)
    stuck_like = tally[TERMINAL_STUCK]
    if cfg.run.timeout_counts_as_stuck:
        stuck_like += tally[TERMINAL_TIMEOUT]
    report = EvalReport(
        policy=policy, episodes=episodes,
        successes=tally[TERMINAL_SUCCESS], collisions=tally[TERMINAL_COLLISION],
        stucks=tally[TERMINAL_STUCK], timeouts=tally[TERMINAL_TIMEOUT],
        p_s=success_rate(tally[TERMINAL_COLLISION], stuck_like, episodes),
        p_s_strict=success_rate(tally[TERMINAL_COLLISION],
                                tally[TERMINAL_STUCK], episodes),
        activation_proportion=(drl_steps / decision_steps) if decision_steps else 0.0,
        decision_steps=decision_steps, drl_steps=drl_steps,
        master_seed=master_seed, per_episode=per_episode,
    )
    report.validate()
    return report


def sweep(cfg: Config, parameter: str, values: list[float], master_seed: int,
          episodes: int, ensemble: EnsembleNet,
          counts: CountIndex) -> list[tuple[float, EvalReport]]:
    """One gated evaluation per threshold value on a shared seed set."""
    if parameter not in ("p_thres", "n_thres"):
        raise ValueError(f"unknown sweep parameter {parameter!r}")
    rows = []
    for value in values:
        gate_cfg = dataclasses.replace(cfg.gate)
        if parameter == "p_thres":
            gate_cfg.p_thres = float(value)
        else:
            gate_cfg.n_thres = int(value)
        report = evaluate(cfg, POLICY_GATED, master_seed, episodes,
                          ensemble=ensemble, counts=counts, gate_cfg=gate_cfg)
        rows.append((value, report))
    return rows


def sweep_csv(parameter: str, rows: list[tuple[float, EvalReport]]) -> str:
    lines = [f"{parameter}," + EvalReport.CSV_HEADER]
    for value, report in rows:
        lines.append(f"{value!r},{report.csv_row()}")
    return "\n".join(lines) + "\n"


def inspect_uncertainty(ensemble: EnsembleNet, counts: CountIndex,
                        probes: list[tuple[np.ndarray, int, float | None]]) -> list[dict]:
    """Per-probe head values, spread, count, and true-value error if known."""
    rows = []
    for s, a, true_q in probes:
        q = ensemble_forward(ensemble, s)[:, a]
        mean, sigma = head_stats(ensemble, s, a)
        row = {"action": int(a), "head_q": q.tolist(), "mean": mean,
               "sigma": sigma, "count": counts.query(s, a)}
        if true_q is not None:
            row["true_q"] = float(true_q)
            row["abs_error"] = abs(mean - float(true_q))
        rows.append(row)
    return rows
