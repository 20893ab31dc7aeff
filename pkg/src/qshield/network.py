"""Ensemble of plain numpy value networks with delayed target copies.

Each head is a four-layer fully connected network (three rectified hidden
layers, linear output, one Q-value per action). Training is literal
stochastic gradient descent on the squared one-step error against the
baseline-action target, with importance weights folded into the per-sample
loss and the bootstrap mask deciding which heads see which samples.
"""

from __future__ import annotations

import numpy as np

from .config import TrainConfig


class DivergenceError(RuntimeError):
    """A batch produced a Q-value past the configured abort threshold."""


class Mlp:
    """Fully connected network; float64 weights, rectifier hidden layers."""

    def __init__(self, sizes: tuple[int, ...], rng: np.random.Generator | None = None):
        self.sizes = tuple(sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            if rng is None:
                w = np.zeros((fan_in, fan_out))
                b = np.zeros(fan_out)
            else:
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
                b = rng.uniform(-bound, bound, size=fan_out)
            self.weights.append(w)
            self.biases.append(b)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            x = np.maximum(x @ w + b, 0.0)
        return x @ self.weights[-1] + self.biases[-1]

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping layer activations for backprop."""
        acts = [np.atleast_2d(x)]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            acts.append(np.maximum(acts[-1] @ w + b, 0.0))
        out = acts[-1] @ self.weights[-1] + self.biases[-1]
        return out, acts

    def backward(self, acts: list[np.ndarray], grad_out: np.ndarray):
        """Exact gradients of sum_j loss_j given d loss / d output."""
        grads_w = [np.empty(0)] * len(self.weights)
        grads_b = [np.empty(0)] * len(self.biases)
        delta = grad_out
        for layer in range(len(self.weights) - 1, -1, -1):
            grads_w[layer] = acts[layer].T @ delta
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (acts[layer] > 0.0)
        return grads_w, grads_b

    def apply_grads(self, grads_w, grads_b, lr: float) -> None:
        for layer in range(len(self.weights)):
            self.weights[layer] -= lr * grads_w[layer]
            self.biases[layer] -= lr * grads_b[layer]

    def copy_from(self, other: "Mlp") -> None:
        self.weights = [w.copy() for w in other.weights]
        self.biases = [b.copy() for b in other.biases]

    def clone(self) -> "Mlp":
        twin = Mlp(self.sizes, rng=None)
        twin.copy_from(self)
        return twin


class EnsembleNet:
    def __init__(self, heads: list[Mlp], targets: list[Mlp]):
        if len(heads) != len(targets):
            raise ValueError("heads and targets must pair up")
        self.heads = heads
        self.targets = targets
        self.train_step_counter = 0

    @property
    def n_e(self) -> int:
        return len(self.heads)

    @property
    def n_actions(self) -> int:
        return self.heads[0].sizes[-1]


def init_ensemble(obs_size: int, n_actions: int, cfg: TrainConfig,
                  seed: int | list[int]) -> EnsembleNet:
    """Independently initialized heads; targets start as exact copies."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    sizes = (obs_size, *cfg.hidden, n_actions)
    heads = [Mlp(sizes, rng) for _ in range(cfg.n_e)]
    targets = [h.clone() for h in heads]
    return EnsembleNet(heads, targets)


def ensemble_forward(e: EnsembleNet, s: np.ndarray) -> np.ndarray:
    """(n_e, |A|) Q-matrix for one state."""
    s = np.asarray(s, dtype=float).reshape(1, -1)
    return np.vstack([h.forward(s) for h in e.heads])


def head_stats(e: EnsembleNet, s: np.ndarray, a: int) -> tuple[float, float]:
    """Ensemble mean and population spread of Q(s, a) across heads."""
    q = ensemble_forward(e, s)[:, a]
    return float(q.mean()), float(q.std())


def sync_targets(e: EnsembleNet) -> None:
    for head, target in zip(e.heads, e.targets):
        target.copy_from(head)


def td_update(e: EnsembleNet, states: np.ndarray, actions: np.ndarray,
              rewards: np.ndarray, next_states: np.ndarray,
              terminals: np.ndarray, masks: np.ndarray,
              baseline_next: np.ndarray, weights: np.ndarray,
              cfg: TrainConfig) -> np.ndarray:
    """One SGD step per head on its masked share of the batch.

    Target: y = r + gamma * Q_target(s', a_b), or y = r on terminal samples.
    Returns the per-sample TD-error magnitudes averaged over the heads that
    actually trained on each sample (zero where no head did), for priority
    updates. Raises DivergenceError when any |Q| crosses the abort threshold.
    """
    batch = len(states)
    actions = np.asarray(actions, dtype=int)
    baseline_next = np.asarray(baseline_next, dtype=int)
    terminals = np.asarray(terminals, dtype=bool)
    masks = np.asarray(masks, dtype=bool)
    weights = np.asarray(weights, dtype=float)

    abs_err_sum = np.zeros(batch)
    active_heads = np.zeros(batch)
    max_q = 0.0
    for i, (head, target) in enumerate(zip(e.heads, e.targets)):
        use = masks[:, i]
        if not use.any():
            continue
        s = states[use]
        q_all, acts = head.forward_cached(s)
        q_next = target.forward(next_states[use])
        max_q = max(max_q, float(np.abs(q_all).max()), float(np.abs(q_next).max()))
        rows = np.arange(len(s))
        q_sel = q_all[rows, actions[use]]
        y = rewards[use] + np.where(
            terminals[use], 0.0,
            cfg.gamma * q_next[rows, baseline_next[use]])
        err = q_sel - y
        # d/dQ of mean_j w_j * err_j^2 / 2 over this head's share.
        grad_out = np.zeros_like(q_all)
        grad_out[rows, actions[use]] = weights[use] * err / len(s)
        head.apply_grads(*head.backward(acts, grad_out), cfg.learning_rate)
        abs_err_sum[use] += np.abs(err)
        active_heads[use] += 1.0
    e.train_step_counter += 1
    if max_q > cfg.divergence_q:
        raise DivergenceError(
            f"|Q| reached {max_q:.3g} (limit {cfg.divergence_q:.3g}) "
            f"at train step {e.train_step_counter}")
    return np.where(active_heads > 0, abs_err_sum / np.maximum(active_heads, 1.0), 0.0)
