"""Players for simulated episodes.

Every agent implements ``start(model, rng)``, ``act(...)`` and
``observe(a1, s1_next)``.  The partially informed side acts on ``s1`` only;
the informed side also sees the environment point.
"""

from __future__ import annotations

import itertools

import numpy as np

from osposg import inferred, resolver
from osposg.belief import StageStrategy2, WeightedBelief, update_belief
from osposg.hsvi import FrozenBounds
from osposg.model import GameModel


class Agent1:
    """Base for the partially informed side; tracks a belief under a uniform opponent."""

    name = "agent1"

    def start(self, model: GameModel, rng: np.random.Generator) -> None:
        self.model = model
        self.rng = rng
        self.belief = model.init_belief
        self.last_probs: np.ndarray | None = None

    def probs(self, s1: int) -> np.ndarray:
        raise NotImplementedError

    def act(self, s1: int) -> int:
        p = self.probs(s1)
        self.last_probs = p
        return int(self.rng.choice(len(p), p=p))

    def observe(self, a1: int, s1_next: int) -> None:
        self.belief = update_belief(self.model, self.belief, a1,
                                    StageStrategy2.uniform(self.model.n_a2), s1_next)

    def record(self) -> dict:
        return {"belief": self.belief.to_json(self.model)["particles"],
                "u1": None if self.last_probs is None else self.last_probs.tolist()}


class Agent2:
    name = "agent2"
    belief: WeightedBelief | None = None

    def start(self, model: GameModel, rng: np.random.Generator) -> None:
        self.model = model
        self.rng = rng
        self.last_row: np.ndarray | None = None

    def row(self, s1: int, e: int) -> np.ndarray:
        raise NotImplementedError

    def act(self, s1: int, e: int) -> int:
        r = self.row(s1, e)
        self.last_row = r
        return int(self.rng.choice(len(r), p=r))

    def observe(self, a1: int, s1_next: int) -> None:
        pass

    def record(self) -> dict:
        return {"u2": None if self.last_row is None else self.last_row.tolist()}


# ---------------------------------------------------------------------------
# bound-driven agents
# ---------------------------------------------------------------------------

class ResolvingAgent(Agent1):
    """Continual resolving against the frozen lower bound."""

    name = "lb"

    def __init__(self, frozen: FrozenBounds):
        self.frozen = frozen

    def start(self, model, rng):
        self.model = model
        self.rng = rng
        self.last_probs = None
        self.state = resolver.init_resolver(self.frozen, model.init_belief, rng)

    @property
    def belief(self):
        return self.state.belief

    def act(self, s1):
        if s1 != self.state.belief.s1:
            raise RuntimeError("agent state out of sync with the resolver belief")
        u1, self.state = resolver.resolve_stage(self.state)
        self.last_probs = u1.probs
        return resolver.act(self.state, u1)

    def observe(self, a1, s1_next):
        self.state = resolver.advance(self.state, a1, s1_next)

    def record(self):
        out = super().record()
        out["alpha1"] = self.state.summary()
        return out


class InferredAgent(Agent2):
    """Minimiser of the upper-bound stage LP at the inferred belief."""

    name = "ub"

    def __init__(self, frozen: FrozenBounds):
        self.frozen = frozen

    def start(self, model, rng):
        super().start(model, rng)
        self.state = inferred.init_inferred(self.frozen, model.init_belief, rng)

    @property
    def belief(self):
        return self.state.inferred_belief

    def act(self, s1, e):
        a2 = inferred.act2(self.state, s1, e)
        self.last_row = self.state.u2_star.row(e, s1)
        return a2

    def observe(self, a1, s1_next):
        self.state = inferred.advance2(self.state, a1, s1_next)

    def record(self):
        out = super().record()
        out["inferred_belief"] = self.state.inferred_belief.to_json(self.model)["particles"]
        return out


# ---------------------------------------------------------------------------
# heuristics
# ---------------------------------------------------------------------------

class Uniform1(Agent1):
    name = "uniform"

    def probs(self, s1):
        return np.full(self.model.n_a1, 1.0 / self.model.n_a1)


class First1(Agent1):
    """Always the first action."""

    name = "first"

    def probs(self, s1):
        p = np.zeros(self.model.n_a1)
        p[0] = 1.0
        return p


def _next_point_value(model: GameModel, s1: int, e: int, score: np.ndarray) -> np.ndarray:
    """``(n_a1, n_a2)`` expected ``score[s1', e']`` after one joint action."""
    t = model.transitions_from(s1, e)
    out = np.zeros((model.n_a1, model.n_a2))
    np.add.at(out, (t.a1, t.a2), t.prob * score[t.s1_next, t.e_next])
    return out


class Greedy1(Agent1):
    """Best one-step lookahead against a uniform opponent under its own belief."""

    name = "greedy"

    def probs(self, s1):
        m = self.model
        score = np.zeros(m.n_a1)
        mean_r = m.reward.mean(axis=(2, 3))
        for e, w in zip(self.belief.points, self.belief.weights):
            q = m.reward[s1, e] + m.beta * _next_point_value(m, s1, e, mean_r)
            score += w * q.mean(axis=1)
        p = np.zeros(m.n_a1)
        p[int(np.argmax(score))] = 1.0
        return p


class Uniform2(Agent2):
    name = "uniform"

    def row(self, s1, e):
        return np.full(self.model.n_a2, 1.0 / self.model.n_a2)


class First2(Agent2):
    name = "first"

    def row(self, s1, e):
        r = np.zeros(self.model.n_a2)
        r[0] = 1.0
        return r


class Greedy2(Agent2):
    """Best one-step lookahead for the minimiser, assuming a uniform opponent."""

    name = "greedy"

    def row(self, s1, e):
        m = self.model
        q = m.reward[s1, e] + m.beta * _next_point_value(m, s1, e, m.reward.mean(axis=(2, 3)))
        score = q.mean(axis=0)
        best = np.flatnonzero(score <= score.min() + 1e-12)
        r = np.zeros(m.n_a2)
        r[best] = 1.0 / len(best)
        return r


# -- pursuit-evasion scripts (positions read from point coordinates) ---------

def _separation(model: GameModel) -> np.ndarray:
    """``(n_s1, n_points)`` Manhattan distance between pursuer and evader; 0 once caught."""
    sep = np.abs(model.coords[:, :2] - model.coords[:, 2:4]).sum(axis=1)
    sep[[k for k, p in enumerate(model.points) if p == "caught"]] = 0.0
    return np.broadcast_to(sep, (model.n_s1, model.n_points))


class Flee2(Agent2):
    """Evader maximising the expected Manhattan separation after the move."""

    name = "flee"

    def row(self, s1, e):
        m = self.model
        sep = _next_point_value(m, s1, e, _separation(m)).mean(axis=0)
        best = np.flatnonzero(sep >= sep.max() - 1e-12)
        r = np.zeros(m.n_a2)
        r[best] = 1.0 / len(best)
        return r


class Stay2(Agent2):
    name = "stay"

    def row(self, s1, e):
        r = np.zeros(self.model.n_a2)
        r[self.model.a2.index("stay")] = 1.0
        return r


class Chase1(Agent1):
    """Pursuer minimising the belief-expected separation, evader assumed uniform."""

    name = "chase"

    def probs(self, s1):
        m = self.model
        score = np.zeros(m.n_a1)
        sep = _separation(m)
        for e, w in zip(self.belief.points, self.belief.weights):
            score += w * _next_point_value(m, s1, e, sep).mean(axis=1)
        p = np.zeros(m.n_a1)
        p[int(np.argmin(score))] = 1.0
        return p


class Sweep1(Agent1):
    """Pursuer following a fixed back-and-forth route over the grid."""

    name = "sweep"

    def start(self, model, rng):
        super().start(model, rng)
        width = int(round(model.coords[:, 0].max() + 0.5))
        height = int(round(model.coords[:, 1].max() + 0.5))
        row = ["right"] * (width - 1)
        back = ["left"] * (width - 1)
        route = []
        for k in range(height):
            route += (row if k % 2 == 0 else back) + (["up"] if k < height - 1 else [])
        route += ["down"] * (height - 1)
        self.route = itertools.cycle([model.a1.index(a) for a in route])

    def probs(self, s1):
        p = np.zeros(self.model.n_a1)
        p[next(self.route)] = 1.0
        return p


ADVERSARIES2 = {"uniform": Uniform2, "first": First2, "greedy": Greedy2, "flee": Flee2, "stay": Stay2}
HEURISTICS1 = {"uniform": Uniform1, "first": First1, "greedy": Greedy1, "chase": Chase1, "sweep": Sweep1}
PURSUIT_ONLY = {"flee", "stay", "chase", "sweep"}
