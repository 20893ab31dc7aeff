"""Prioritized replay with per-experience bootstrap masks.

Priorities live in a binary sum tree. Parent nodes are recomputed as
left + right on every leaf write, so each internal value is an exact pairwise
reduction of the current leaves: the root tracks the true total to float
precision regardless of operation history, and rebuilding the tree from its
leaves reproduces it bitwise (which the checkpoint relies on).

Bootstrap masks are drawn once at insertion and never change; they define
which ensemble heads may train on the experience.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TrainConfig


class NotReadyError(RuntimeError):
    """Sampling was requested before the buffer held one full batch."""


@dataclass
class Experience:
    """One transition; mask is stamped by the buffer at insertion."""

    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminal: bool
    baseline_next_action: int
    mask: np.ndarray | None = None


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    masks: np.ndarray
    baseline_next: np.ndarray
    weights: np.ndarray
    handles: list[tuple[int, int]]


class SumTree:
    """Fixed-size binary tree; leaf i at node capacity-1+i."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.nodes = np.zeros(2 * capacity - 1)

    @property
    def total(self) -> float:
        return float(self.nodes[0])

    def get(self, leaf: int) -> float:
        return float(self.nodes[self.capacity - 1 + leaf])

    def set(self, leaf: int, value: float) -> None:
        idx = self.capacity - 1 + leaf
        self.nodes[idx] = value
        while idx > 0:
            idx = (idx - 1) // 2
            self.nodes[idx] = self.nodes[2 * idx + 1] + self.nodes[2 * idx + 2]

    def find(self, prefix: float) -> int:
        """Leaf index owning the given cumulative mass."""
        idx = 0
        while idx < self.capacity - 1:
            left = 2 * idx + 1
            if prefix < self.nodes[left]:
                idx = left
            else:
                prefix -= self.nodes[left]
                idx = left + 1
        return idx - (self.capacity - 1)

    def rebuild(self, leaves: np.ndarray) -> None:
        self.nodes[self.capacity - 1:] = leaves
        for idx in range(self.capacity - 2, -1, -1):
            self.nodes[idx] = self.nodes[2 * idx + 1] + self.nodes[2 * idx + 2]


class PrioritizedBuffer:
    def __init__(self, cfg: TrainConfig, obs_size: int):
        self.cfg = cfg
        cap = cfg.buffer_capacity
        self.tree = SumTree(cap)
        self.states = np.zeros((cap, obs_size))
        self.actions = np.zeros(cap, dtype=np.int64)
        self.rewards = np.zeros(cap)
        self.next_states = np.zeros((cap, obs_size))
        self.terminals = np.zeros(cap, dtype=bool)
        self.masks = np.zeros((cap, cfg.n_e), dtype=bool)
        self.baseline_next = np.zeros(cap, dtype=np.int64)
        self.insert_ids = np.full(cap, -1, dtype=np.int64)
        self.cursor = 0
        self.size = 0
        self.inserted = 0
        self.max_priority = 1.0  # running max of raw priorities ever seen
        self.stale_warnings = 0

    def __len__(self) -> int:
        return self.size

    def add(self, exp: Experience, rng: np.random.Generator) -> tuple[int, int]:
        """Insert with a fresh Bernoulli(p_share) mask at max priority."""
        exp.mask = rng.random(self.cfg.n_e) < self.cfg.p_share
        slot = self.cursor
        self.states[slot] = exp.s
        self.actions[slot] = exp.a
        self.rewards[slot] = exp.r
        self.next_states[slot] = exp.s_next
        self.terminals[slot] = exp.terminal
        self.masks[slot] = exp.mask
        self.baseline_next[slot] = exp.baseline_next_action
        self.insert_ids[slot] = self.inserted
        self.tree.set(slot, self.max_priority ** self.cfg.priority_exponent)
        handle = (slot, self.inserted)
        self.inserted += 1
        self.cursor = (self.cursor + 1) % self.cfg.buffer_capacity
        self.size = min(self.size + 1, self.cfg.buffer_capacity)
        return handle

    def sample(self, batch_size: int, rng: np.random.Generator,
               beta: float) -> Batch:
        """Stratified draw proportional to stored priority mass."""
        if self.size < batch_size:
            raise NotReadyError(f"buffer holds {self.size} < batch {batch_size}")
        total = self.tree.total
        segment = total / batch_size
        slots = np.empty(batch_size, dtype=np.int64)
        for k in range(batch_size):
            mass = (k + rng.random()) * segment
            slot = self.tree.find(min(mass, np.nextafter(total, 0.0)))
            slots[k] = min(slot, self.size - 1)
        probs = np.array([self.tree.get(int(i)) for i in slots]) / total
        weights = (self.size * probs) ** -beta
        weights /= weights.max()
        handles = [(int(s), int(self.insert_ids[s])) for s in slots]
        return Batch(
            states=self.states[slots], actions=self.actions[slots],
            rewards=self.rewards[slots], next_states=self.next_states[slots],
            terminals=self.terminals[slots], masks=self.masks[slots],
            baseline_next=self.baseline_next[slots],
            weights=weights, handles=handles,
        )

    def update_priorities(self, handles: list[tuple[int, int]],
                          td_errors: np.ndarray) -> None:
        for (slot, insert_id), err in zip(handles, td_errors):
            if self.insert_ids[slot] != insert_id:
                self.stale_warnings += 1  # overwritten since sampling
                continue
            priority = abs(float(err)) + self.cfg.epsilon_priority
            self.max_priority = max(self.max_priority, priority)
            self.tree.set(slot, priority ** self.cfg.priority_exponent)

    # -- checkpoint support ---------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {
            "states": self.states, "actions": self.actions,
            "rewards": self.rewards, "next_states": self.next_states,
            "terminals": self.terminals, "masks": self.masks,
            "baseline_next": self.baseline_next, "insert_ids": self.insert_ids,
            "priorities": self.tree.nodes[self.tree.capacity - 1:].copy(),
            "scalars": np.array([self.cursor, self.size, self.inserted,
                                 self.stale_warnings], dtype=np.int64),
            "max_priority": np.array([self.max_priority]),
        }

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.states[:] = arrays["states"]
        self.actions[:] = arrays["actions"]
        self.rewards[:] = arrays["rewards"]
        self.next_states[:] = arrays["next_states"]
        self.terminals[:] = arrays["terminals"]
        self.masks[:] = arrays["masks"]
        self.baseline_next[:] = arrays["baseline_next"]
        self.insert_ids[:] = arrays["insert_ids"]
        self.tree.rebuild(arrays["priorities"])
        self.cursor, self.size, self.inserted, self.stale_warnings = (
            int(v) for v in arrays["scalars"])
        self.max_priority = float(arrays["max_priority"][0])
