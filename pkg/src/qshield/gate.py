"""Decision arbitration between the learned ensemble and the rule-based action.

The ensemble proposes an action by voting: for every action, each head judges
whether it beats the rule-based action's Q-value; the action with the most
favorable heads wins. The proposal is executed only when three conditions all
hold at decision time: the ensemble-mean Q of the proposal is at least the
rule-based action's, the vote fraction strictly clears p_thres, and both
state-action boxes have been trained at least n_thres times. Otherwise the
rule-based action is used, making it a performance floor.

Equality of two head Q-values counts as a vote against the proposal: only a
strict win counts, which biases toward the floor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import GateConfig
from .counts import CountIndex

SOURCE_DRL = "drl"
SOURCE_BASELINE = "baseline"
SOURCE_GREEDY = "greedy"
SOURCE_RANDOM = "random"


@dataclass
class Decision:
    action: int
    source: str              # "drl" | "baseline"
    drl_action: int
    baseline_action: int
    p_o: float               # vote fraction for drl_action
    votes: np.ndarray        # per-head bits
    mean_gap: float          # ensemble-mean Q(a_rl) - Q(a_rb)
    count_rl: int
    count_rb: int
    sigma_rl: float
    sigma_rb: float


def vote(q: np.ndarray, a: int, a_rb: int) -> tuple[np.ndarray, float]:
    """Per-head strict-win bits of action a over a_rb, and their fraction."""
    bits = q[:, a] > q[:, a_rb]
    return bits, float(bits.mean())


def drl_action(q: np.ndarray, a_rb: int) -> int:
    """Most-voted action; ties broken by ensemble mean, then lower index."""
    votes_per_action = (q > q[:, [a_rb]]).sum(axis=0)
    tied = np.flatnonzero(votes_per_action == votes_per_action.max())
    means = q.mean(axis=0)[tied]
    tied = tied[means == means.max()]
    return int(tied[0])


def activation_check(q: np.ndarray, a_rl: int, a_rb: int,
                     count_rl: int, count_rb: int,
                     cfg: GateConfig) -> tuple[bool, float, float]:
    """(accept, vote fraction, mean gap) for the three gate conditions."""
    _, fraction = vote(q, a_rl, a_rb)
    means = q.mean(axis=0)
    gap = float(means[a_rl] - means[a_rb])
    accept = (gap >= 0.0 and fraction > cfg.p_thres
              and count_rl >= cfg.n_thres and count_rb >= cfg.n_thres)
    return accept, fraction, gap


def decide(q: np.ndarray, s: np.ndarray, a_rb: int, counts: CountIndex,
           cfg: GateConfig) -> Decision:
    """Full arbitration for one state given the ensemble Q-matrix at s."""
    a_rl = drl_action(q, a_rb)
    count_rl = counts.query(s, a_rl)
    count_rb = counts.query(s, a_rb)
    accept, fraction, gap = activation_check(q, a_rl, a_rb, count_rl, count_rb, cfg)
    bits, _ = vote(q, a_rl, a_rb)
    return Decision(
        action=a_rl if accept else a_rb,
        source=SOURCE_DRL if accept else SOURCE_BASELINE,
        drl_action=a_rl, baseline_action=a_rb,
        p_o=fraction, votes=bits, mean_gap=gap,
        count_rl=count_rl, count_rb=count_rb,
        sigma_rl=float(q[:, a_rl].std()), sigma_rb=float(q[:, a_rb].std()),
    )


def explore_action(q: np.ndarray, s: np.ndarray, a_rb: int, head_k: int,
                   counts: CountIndex, cfg: GateConfig,
                   rng: np.random.Generator) -> tuple[int, str]:
    """Behavior policy for training episodes.

    The rule-based action is explored first; only once its spread is small
    and its box count strictly clears n_thres does the episode's head pick
    greedily, with an epsilon-random action mixed in at rate k_e.
    """
    sigma_rb = float(q[:, a_rb].std())
    if sigma_rb < cfg.sigma_thres and counts.query(s, a_rb) > cfg.n_thres:
        if rng.random() < cfg.k_e:
            return int(rng.integers(q.shape[1])), SOURCE_RANDOM
        return int(np.argmax(q[head_k])), SOURCE_GREEDY
    return a_rb, SOURCE_BASELINE
