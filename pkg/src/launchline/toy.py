"""Small deterministic MDPs that can be solved by enumerating every policy.

They plug into the optimizers through the same ``costs`` interface as the
launcher simulator, which makes them exact oracles for the update rules.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


@dataclass
class ToyMDP:
    """``next_state[t, s, a]`` and ``cost[t, s, a]``, 0-based states and actions.

    A policy is ``(T, S)`` with 1-based actions. Its cost is the sum, over
    every start cell ``(t0, s0)``, of the costs collected along the
    deterministic path from that cell to the horizon. Starting everywhere
    makes every cell's action matter.
    """

    next_state: np.ndarray
    cost: np.ndarray
    name: str = "toy"

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost.shape[:2]

    @property
    def n_actions(self) -> int:
        return self.cost.shape[2]

    def policy_costs(self, policies: np.ndarray) -> np.ndarray:
        policies = np.asarray(policies)
        if policies.ndim == 2:
            policies = policies[None]
        T, S = self.shape
        n = len(policies)
        rows = np.arange(n)[:, None]
        total = np.zeros(n)
        for t0 in range(T):
            state = np.broadcast_to(np.arange(S), (n, S)).copy()
            for t in range(t0, T):
                a = policies[rows, t, state] - 1
                total += self.cost[t, state, a].sum(axis=1)
                state = self.next_state[t, state, a]
        return total

    def costs(self, policies: np.ndarray, seeds: np.ndarray) -> np.ndarray:
        seeds = np.asarray(seeds)
        if seeds.ndim == 1:
            seeds = seeds[None]
        c = self.policy_costs(policies)
        return np.repeat(c[:, None], seeds.shape[1], axis=1)

    def mean_costs(self, policies, M, master_seed, key) -> np.ndarray:
        # deterministic: every trajectory costs the same
        return self.policy_costs(policies)

    def all_policies(self) -> np.ndarray:
        T, S = self.shape
        grid = itertools.product(range(1, self.n_actions + 1), repeat=T * S)
        return np.array(list(grid), dtype=np.int64).reshape(-1, T, S)

    def uniform_tensor(self) -> np.ndarray:
        T, S = self.shape
        return np.full((T, S, self.n_actions), 1.0 / self.n_actions)


def enumerate_optimum(mdp: ToyMDP, chunk: int = 1 << 16):
    """Brute-force minimum: ``(policy, cost, runner_up_cost)``."""
    T, S = mdp.shape
    A = mdp.n_actions
    n = A ** (T * S)
    digits = A ** np.arange(T * S - 1, -1, -1)
    costs_all = np.empty(n)
    for lo in range(0, n, chunk):
        idx = np.arange(lo, min(n, lo + chunk))
        pols = (idx[:, None] // digits) % A + 1
        costs_all[lo:lo + len(idx)] = mdp.policy_costs(pols.reshape(-1, T, S))
    order = np.argsort(costs_all, kind="stable")
    i = order[0]
    policy = ((i // digits) % A + 1).reshape(T, S)
    best = (policy.astype(np.int64), float(costs_all[i]), float(costs_all[order[1]]))
    return best


def _rotations(T: int, S: int, A: int, shifts) -> np.ndarray:
    # action a moves state s to s + shift[a] (mod S): a permutation for each a
    nxt = np.empty((T, S, A), np.int64)
    for t in range(T):
        for a in range(A):
            nxt[t, :, a] = (np.arange(S) + shifts[t][a]) % S
    return nxt


def _instance(name: str, T: int, S: int, A: int, shifts, cost_seed: int) -> ToyMDP:
    # integer costs 1..9; seeds chosen so the optimum is unique by a margin of 2
    cost = np.random.default_rng(cost_seed).integers(1, 10, (T, S, A)).astype(float)
    return ToyMDP(_rotations(T, S, A, shifts), cost, name)


def two_by_two() -> ToyMDP:
    """2 states, 2 actions, 2 periods: 16 policies."""
    return _instance("2s2a2t", 2, 2, 2, [(0, 1), (0, 1)], 2)


def three_by_three() -> ToyMDP:
    """3 states, 3 actions, 2 periods: 729 policies."""
    return _instance("3s3a2t", 2, 3, 3, [(0, 1, 2), (1, 0, 2)], 29)


def four_by_three() -> ToyMDP:
    """4 states, 3 actions, 3 periods: 531,441 policies."""
    return _instance("4s3a3t", 3, 4, 3, [(0, 1, 3), (2, 0, 1), (0, 3, 1)], 57)


TOY_MDPS = (two_by_two, three_by_three, four_by_three)
