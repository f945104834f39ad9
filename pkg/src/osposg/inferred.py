"""Inferred-belief play for the fully informed agent.

The informed agent tracks the belief its opponent would hold if the opponent
knew the informed agent's stage strategies, and plays the minimiser's part of
the upper-bound stage LP at that belief.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from osposg.belief import StageStrategy2, WeightedBelief, update_belief
from osposg.hsvi import FrozenBounds, stage_lp_upper

log = logging.getLogger(__name__)


@dataclass
class InferredState:
    inferred_belief: WeightedBelief
    frozen: FrozenBounds = field(repr=False)
    rng: np.random.Generator = field(repr=False)
    u2_star: StageStrategy2 | None = None
    stage_value: float | None = None
    off_support: int = 0


def init_inferred(frozen: FrozenBounds, b_init: WeightedBelief | None = None,
                  rng: np.random.Generator | None = None) -> InferredState:
    model = frozen.model
    frozen.check_model(model)
    b = model.init_belief if b_init is None else b_init
    return InferredState(b, frozen, rng if rng is not None else np.random.default_rng())


def stage_strategy(state: InferredState) -> StageStrategy2:
    """This stage's minimiser strategy, computed once and shared through the bounds' cache."""
    if state.u2_star is None:
        key = state.inferred_belief.key()
        cache = state.frozen._upper_cache
        hit = cache.get(key)
        if hit is None:
            hit = stage_lp_upper(state.frozen.model, state.frozen.upsilon, state.inferred_belief)
            cache[key] = hit
        state.stage_value, state.u2_star = hit
    return state.u2_star


def act2(state: InferredState, s1: int, e: int) -> int:
    if s1 != state.inferred_belief.s1:
        raise RuntimeError(f"observed agent state {s1} differs from inferred {state.inferred_belief.s1}")
    u2 = stage_strategy(state)
    if not u2.covers(s1, e):
        state.off_support += 1
        log.warning("observed point %d is outside the inferred belief; playing the default row", e)
    row = u2.row(e, s1)
    return int(state.rng.choice(len(row), p=row))


def advance2(state: InferredState, a1: int, s1_next: int) -> InferredState:
    u2 = stage_strategy(state)
    nb = update_belief(state.frozen.model, state.inferred_belief, a1, u2, s1_next)
    return InferredState(nb, state.frozen, state.rng, off_support=state.off_support)
