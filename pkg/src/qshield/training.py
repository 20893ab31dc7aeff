"""Training loop: explore around the rule-based policy, learn its value.

One environment step performs one planning cycle, one action, one buffer
insertion (the previous step's transition, completed with the rule-based
action at the state just reached), one prioritized batch update once the
buffer holds a batch, count increments for every batch row, and a target
sync every target_sync_period train steps.

Checkpoints are cut at episode boundaries only: the first boundary at or past
each cadence mark. Everything the loop owns (ensemble, buffer, counts, RNG
states, step counters) round-trips through the checkpoint, so a resumed run
continues bit-identically; per-episode simulator streams are derived from the
master seed and the episode index, never from ambient state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, restore_rng, rng_state, save_checkpoint
from .config import Config, config_from_dict, config_to_dict
from .counts import CountIndex
from .frenet import ReferencePath
from .gate import explore_action
from .lattice import LatticePlanner
from .network import (DivergenceError, EnsembleNet, ensemble_forward,
                      init_ensemble, sync_targets, td_update)
from .replay import Experience, PrioritizedBuffer
from .simulator import TERMINAL_NONE, TJunctionSim, agent_array, observation_size, observe

TRAIN_EPISODE_STREAM = 0
EVAL_EPISODE_STREAM = 1
NET_INIT_STREAM = 2
TRAIN_RNG_STREAM = 3
EXPLORE_RNG_STREAM = 4


def episode_seed(master_seed: int, stream: int, episode: int) -> list[int]:
    return [master_seed, stream, episode]


@dataclass
class RunManifest:
    master_seed: int
    config: dict
    version: str
    checkpoints: list[dict]
    complete: bool

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(path: str | Path) -> "RunManifest":
        with open(path) as fh:
            return RunManifest(**json.load(fh))


class Trainer:
    def __init__(self, cfg: Config, master_seed: int):
        cfg.validate()
        self.cfg = cfg
        self.master_seed = master_seed
        scenario = cfg.scenario
        self.sim = TJunctionSim(scenario)
        self.path = ReferencePath(self.sim.junction.ego_route)
        self.planner = LatticePlanner(self.path, cfg.planner, scenario)
        self.obs_size = observation_size(scenario)
        self.ensemble = init_ensemble(
            self.obs_size, self.planner.n_actions, cfg.train,
            episode_seed(master_seed, NET_INIT_STREAM, 0))
        self.buffer = PrioritizedBuffer(cfg.train, self.obs_size)
        self.counts = CountIndex()
        self.train_rng = np.random.default_rng(
            np.random.SeedSequence(episode_seed(master_seed, TRAIN_RNG_STREAM, 0)))
        self.explore_rng = np.random.default_rng(
            np.random.SeedSequence(episode_seed(master_seed, EXPLORE_RNG_STREAM, 0)))
        self.env_step = 0
        self.episode = 0

    # -- persistence ----------------------------------------------------------

    def checkpoint_arrays(self) -> tuple[dict, dict]:
        arrays: dict[str, np.ndarray] = {}
        for i, (head, target) in enumerate(zip(self.ensemble.heads,
                                               self.ensemble.targets)):
            for layer, (w, b) in enumerate(zip(head.weights, head.biases)):
                arrays[f"head_{i}_w{layer}"] = w
                arrays[f"head_{i}_b{layer}"] = b
            for layer, (w, b) in enumerate(zip(target.weights, target.biases)):
                arrays[f"target_{i}_w{layer}"] = w
                arrays[f"target_{i}_b{layer}"] = b
        for name, arr in self.buffer.state_arrays().items():
            arrays[f"buffer_{name}"] = arr
        for name, arr in self.counts.state_arrays().items():
            arrays[f"counts_{name}"] = arr
        meta = {
            "config": config_to_dict(self.cfg),
            "master_seed": self.master_seed,
            "env_step": self.env_step,
            "episode": self.episode,
            "train_step_counter": self.ensemble.train_step_counter,
            "train_rng": rng_state(self.train_rng),
            "explore_rng": rng_state(self.explore_rng),
            "version": __version__,
        }
        return arrays, meta

    def save(self, path: str | Path) -> None:
        arrays, meta = self.checkpoint_arrays()
        save_checkpoint(path, arrays, meta)

    @staticmethod
    def load(path: str | Path) -> "Trainer":
        arrays, meta = load_checkpoint(path)
        cfg = config_from_dict(meta["config"])
        trainer = Trainer(cfg, meta["master_seed"])
        for i, (head, target) in enumerate(zip(trainer.ensemble.heads,
                                               trainer.ensemble.targets)):
            for layer in range(len(head.weights)):
                head.weights[layer] = arrays[f"head_{i}_w{layer}"].copy()
                head.biases[layer] = arrays[f"head_{i}_b{layer}"].copy()
                target.weights[layer] = arrays[f"target_{i}_w{layer}"].copy()
                target.biases[layer] = arrays[f"target_{i}_b{layer}"].copy()
        trainer.buffer.load_arrays(
            {k[len("buffer_"):]: v for k, v in arrays.items()
             if k.startswith("buffer_")})
        trainer.counts.load_arrays(
            {k[len("counts_"):]: v for k, v in arrays.items()
             if k.startswith("counts_")})
        trainer.ensemble.train_step_counter = meta["train_step_counter"]
        trainer.train_rng = restore_rng(meta["train_rng"])
        trainer.explore_rng = restore_rng(meta["explore_rng"])
        trainer.env_step = meta["env_step"]
        trainer.episode = meta["episode"]
        return trainer

    # -- the loop -------------------------------------------------------------

    def _beta(self, total_steps: int) -> float:
        t = self.cfg.train
        if total_steps <= 0:
            return t.is_exponent_final
        frac = min(self.env_step / total_steps, 1.0)
        return t.is_exponent_start + (t.is_exponent_final - t.is_exponent_start) * frac

    def _train_batch(self, total_steps: int) -> None:
        t = self.cfg.train
        if len(self.buffer) < t.batch_size:
            return
        batch = self.buffer.sample(t.batch_size, self.train_rng,
                                   self._beta(total_steps))
        td_errors = td_update(
            self.ensemble, batch.states, batch.actions, batch.rewards,
            batch.next_states, batch.terminals, batch.masks,
            batch.baseline_next, batch.weights, t)
        self.buffer.update_priorities(batch.handles, td_errors)
        self.counts.increment_batch(batch.states, batch.actions)
        if self.ensemble.train_step_counter % t.target_sync_period == 0:
            sync_targets(self.ensemble)

    def run_episode(self, total_steps: int) -> dict:
        """One training episode; returns a small summary record."""
        world = self.sim.reset(episode_seed(self.master_seed,
                                            TRAIN_EPISODE_STREAM, self.episode))
        head_k = int(self.explore_rng.integers(self.cfg.train.n_e))
        prev = None
        pending: Experience | None = None
        steps = 0
        terminal = TERMINAL_NONE
        while True:
            obs = observe(world, self.cfg.scenario)
            ego = world.ego
            start = self.planner.start_state(
                prev, np.array([ego.x, ego.y]), ego.speed, ego.heading, ego.accel)
            acts = self.planner.plan(start, agent_array(world))
            if pending is not None:
                pending.baseline_next_action = acts.baseline_index
                self.buffer.add(pending, self.train_rng)
                pending = None
            q = ensemble_forward(self.ensemble, obs)
            action, _ = explore_action(q, obs, acts.baseline_index, head_k,
                                       self.counts, self.cfg.gate, self.explore_rng)
            outcome = self.sim.step(acts.trajectories[action])
            self.env_step += 1
            steps += 1
            next_obs = observe(outcome.next, self.cfg.scenario)
            pending = Experience(obs, action, outcome.reward, next_obs,
                                 outcome.terminal != TERMINAL_NONE, 0)
            if outcome.terminal != TERMINAL_NONE:
                # Terminal targets never read the next action; 0 is a filler.
                self.buffer.add(pending, self.train_rng)
                pending = None
            self._train_batch(total_steps)
            prev = acts.trajectories[action]
            world = outcome.next
            if outcome.terminal != TERMINAL_NONE:
                terminal = outcome.terminal
                break
        self.episode += 1
        return {"episode": self.episode - 1, "steps": steps, "terminal": terminal,
                "env_step": self.env_step}

    def run(self, out_dir: str | Path, total_steps: int | None = None,
            checkpoint_every: int | None = None,
            log=None) -> RunManifest:
        run_cfg = self.cfg.run
        total_steps = run_cfg.total_steps if total_steps is None else total_steps
        every = run_cfg.checkpoint_every if checkpoint_every is None else checkpoint_every
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(self.master_seed, config_to_dict(self.cfg),
                               __version__, [], complete=False)
        manifest_path = out / "manifest.json"

        def cut(tag: str) -> None:
            path = out / f"checkpoint_{self.env_step:08d}.ck"
            self.save(path)
            manifest.checkpoints.append({
                "path": path.name, "env_step": self.env_step,
                "episode": self.episode,
                "train_steps": self.ensemble.train_step_counter, "tag": tag})
            manifest.save(manifest_path)

        cut("initial")
        next_mark = every
        try:
            while self.env_step < total_steps:
                record = self.run_episode(total_steps)
                if log is not None:
                    log(record)
                if self.env_step >= next_mark:
                    cut("cadence")
                    next_mark = (self.env_step // every + 1) * every
        except DivergenceError as exc:
            manifest.save(manifest_path)
            raise DivergenceError(
                f"{exc} (episode {self.episode}, env step {self.env_step})") from exc
        if manifest.checkpoints[-1]["env_step"] != self.env_step:
            cut("final")
        manifest.complete = True
        manifest.save(manifest_path)
        return manifest
