"""Continual resolving for the partially informed agent.

The agent carries a belief and a floor table ``alpha1`` drawn from the convex
hull of the frozen alpha tables.  Each stage re-solves the lower-bound stage LP
with ``v_i >= alpha1(s1, e_i)`` and plays its ``p``; the LP's interpolation
weights for the realised ``(a1, s1')`` become the next floor.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from osposg.belief import StageStrategy1, StageStrategy2, WeightedBelief, update_belief
from osposg.bounds import eval_lower
from osposg.hsvi import CHECK_TOL, P_ZERO, FrozenBounds, ResolveSolution, stage_lp_lower

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResolverState:
    belief: WeightedBelief
    alpha1: np.ndarray                  # (n_s1, n_regions), read-only
    frozen: FrozenBounds = field(repr=False)
    rng: np.random.Generator = field(repr=False)
    solution: ResolveSolution | None = field(default=None, repr=False)

    def floor_values(self) -> np.ndarray:
        model = self.frozen.model
        return self.alpha1[self.belief.s1, model.region_of[self.belief.points]]

    def summary(self) -> dict:
        """Trace record of the floor: min, max and its value at the belief."""
        vals = self.floor_values()
        return {"min": float(vals.min()), "max": float(vals.max()),
                "at_belief": float(vals @ self.belief.weights)}


def _freeze(table: np.ndarray) -> np.ndarray:
    table = np.array(table, dtype=float)
    table.setflags(write=False)
    return table


def init_resolver(frozen: FrozenBounds, b_init: WeightedBelief | None = None,
                  rng: np.random.Generator | None = None) -> ResolverState:
    model = frozen.model
    frozen.check_model(model)
    b = model.init_belief if b_init is None else b_init
    _, k = eval_lower(frozen.gamma, b)
    return ResolverState(b, _freeze(frozen.gamma[k]), frozen,
                         rng if rng is not None else np.random.default_rng())


def resolve_stage(state: ResolverState) -> tuple[StageStrategy1, ResolverState]:
    """Solve the floored stage LP; the returned state carries the solution for ``advance``."""
    floor = state.floor_values()
    key = (state.belief.key(), floor.tobytes())
    cache = state.frozen._lower_cache
    sol = cache.get(key)
    if sol is None:
        sol = stage_lp_lower(state.frozen.model, state.frozen.gamma, state.belief, state.alpha1)
        if np.any(sol.v_star < floor - CHECK_TOL):
            raise AssertionError("stage LP returned values below the floor")
        cache[key] = sol
    return sol.u1, replace(state, solution=sol)


def act(state: ResolverState, u1: StageStrategy1) -> int:
    return int(state.rng.choice(len(u1.probs), p=u1.probs))


def advance(state: ResolverState, a1: int, s1_next: int) -> ResolverState:
    """Move to the next stage after playing ``a1`` and observing ``s1_next``."""
    if state.solution is None:
        raise RuntimeError("advance called before resolve_stage")
    model = state.frozen.model
    if (a1, s1_next) not in state.solution.lambda_star or state.solution.p_star[a1] <= P_ZERO:
        log.warning("observed (a1=%d, s1'=%d) has zero reach probability; floor reset to L", a1, s1_next)
    alpha1 = state.solution.continuation(state.frozen.gamma, a1, s1_next)
    u2 = StageStrategy2.uniform(model.n_a2)
    belief = update_belief(model, state.belief, a1, u2, s1_next)
    return ResolverState(belief, _freeze(alpha1), state.frozen, state.rng)


def value_chain_slack(state: ResolverState) -> np.ndarray:
    """Per-particle, per-a2 slack of the floor rows under the cached solution.

    Each entry is ``expected reward + beta * expected next floor - alpha1``;
    all entries should be ``>= -1e-6``.
    """
    sol, model = state.solution, state.frozen.model
    b, s1 = state.belief, state.belief.s1
    out = np.empty((len(b), model.n_a2))
    conts = {}
    for i, e in enumerate(b.points):
        t = model.transitions_from(s1, e)
        vals = np.einsum("a,ab->b", sol.p_star, model.reward[s1, e])
        for k in range(len(t.prob)):
            a1, sn = int(t.a1[k]), int(t.s1_next[k])
            if sol.p_star[a1] <= 0 or t.prob[k] <= 0:
                continue
            if (a1, sn) not in conts:
                conts[(a1, sn)] = sol.continuation(state.frozen.gamma, a1, sn)
            nxt = conts[(a1, sn)][sn, model.region_of[t.e_next[k]]]
            vals[t.a2[k]] += model.beta * sol.p_star[a1] * t.prob[k] * nxt
        out[i] = vals
    return out - state.floor_values()[:, None]
