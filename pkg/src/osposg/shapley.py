"""Value iteration for the perfect-information version of a game.

Every joint state ``(s1, e)`` with ``e`` consistent with ``s1`` is a state of
an ordinary zero-sum stochastic game; each iteration solves one matrix game
per state.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from osposg.lp import solve_matrix_game
from osposg.model import GameModel


def joint_states(model: GameModel) -> list[tuple[int, int]]:
    return [(s1, int(e)) for s1 in range(model.n_s1) for e in model.consistent_points(s1)]


def matrix_game_value(payoff: np.ndarray) -> tuple[float, np.ndarray]:
    """Value and maximin row strategy; pure saddle points skip the LP."""
    lo = payoff.min(axis=1)
    i = int(np.argmax(lo))
    if lo[i] >= payoff.max(axis=0).min() - 1e-12:
        row = np.zeros(payoff.shape[0])
        row[i] = 1.0
        return float(lo[i]), row
    return solve_matrix_game(payoff)


class ShapleyResult(NamedTuple):
    values: dict          # (s1, e) -> value
    error: float          # sup-norm distance to the fixed point is at most this
    iterations: int

    def upper(self) -> dict:
        return {s: v + self.error for s, v in self.values.items()}


def perfect_information_values(model: GameModel, tol: float = 1e-4, max_iter: int = 100_000
                               ) -> ShapleyResult:
    """Values of all joint states when both agents observe everything.

    Iterates until ``||V_k+1 - V_k|| <= tol (1 - beta) / (2 beta)``, which puts
    the result within ``tol / 2`` of the fixed point.
    """
    beta = model.beta
    states = joint_states(model)
    index = {s: k for k, s in enumerate(states)}
    na1, na2 = model.n_a1, model.n_a2
    tables = []
    for s1, e in states:
        t = model.transitions_from(s1, e)
        succ = np.array([index[(int(a), int(b))] for a, b in zip(t.s1_next, t.e_next)], dtype=np.int64)
        tables.append((t.a1 * na2 + t.a2, succ, t.prob, model.reward[s1, e]))
    v = np.zeros(len(states))
    stop = tol * (1.0 - beta) / (2.0 * beta)
    delta, it = np.inf, 0
    for it in range(1, max_iter + 1):
        new = np.empty_like(v)
        for k, (cell, succ, prob, r) in enumerate(tables):
            cont = np.bincount(cell, weights=prob * v[succ], minlength=na1 * na2).reshape(na1, na2)
            new[k] = matrix_game_value(r + beta * cont)[0]
        delta = np.abs(new - v).max()
        v = new
        if delta <= stop:
            break
    error = beta / (1.0 - beta) * float(delta)
    return ShapleyResult({s: float(v[k]) for s, k in index.items()}, error, it)
