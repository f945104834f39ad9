"""Particle beliefs and their Bayesian updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from osposg.model import GameModel

PRUNE_TOL = 1e-12


class ZeroMassObservation(RuntimeError):
    """The observed ``(a1, s1')`` has probability zero under the belief and ``u2``."""


@dataclass(frozen=True, eq=False)
class WeightedBelief:
    """Agent state ``s1`` plus weighted particles over environment points.

    Particles are kept sorted by point index so that equal beliefs compare
    (and hash) equal.
    """

    s1: int
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        order = np.argsort(self.points, kind="stable")
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.int64)[order])
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float)[order])
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @classmethod
    def point_mass(cls, s1: int, e: int) -> "WeightedBelief":
        return cls(s1, np.array([e]), np.array([1.0]))

    def __len__(self) -> int:
        return len(self.points)

    def key(self) -> tuple:
        return (self.s1, self.points.tobytes(), self.weights.tobytes())

    def __eq__(self, other) -> bool:
        return isinstance(other, WeightedBelief) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def weight_of(self, e: int) -> float:
        i = np.searchsorted(self.points, e)
        if i < len(self.points) and self.points[i] == e:
            return float(self.weights[i])
        return 0.0

    def dense(self, n_points: int) -> np.ndarray:
        out = np.zeros(n_points)
        out[self.points] = self.weights
        return out

    def check(self, tol: float = 1e-9) -> None:
        if np.any(self.weights <= 0):
            raise ValueError("belief weights must be positive")
        if abs(float(self.weights.sum()) - 1.0) > tol:
            raise ValueError(f"belief weights sum to {float(self.weights.sum())!r}")
        if len(np.unique(self.points)) != len(self.points):
            raise ValueError("repeated particle")

    def to_json(self, model: GameModel) -> dict:
        st = model.agent_state(self.s1)
        return {
            "loc1": st.loc1, "per1": st.per1,
            "particles": [[model.points[p], float(w)] for p, w in zip(self.points, self.weights)],
        }

    @classmethod
    def from_json(cls, model: GameModel, doc: dict) -> "WeightedBelief":
        s1 = model.s1_index((doc["loc1"], doc["per1"]))
        pts = [model.point_index(p) for p, _ in doc["particles"]]
        return cls(s1, np.array(pts), np.array([w for _, w in doc["particles"]], dtype=float))


@dataclass(frozen=True)
class StageStrategy1:
    probs: np.ndarray  # (n_a1,)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < -1e-9) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"not a distribution: {p}")
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, n: int) -> "StageStrategy1":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def pure(cls, n: int, a: int) -> "StageStrategy1":
        p = np.zeros(n)
        p[a] = 1.0
        return cls(p)

    def __call__(self, a1: int) -> float:
        return float(self.probs[a1])


class StageStrategy2:
    """State-conditioned strategy for the informed agent within one stage.

    Rows are stored for the explicitly listed points (all with the same agent
    state ``s1``); any other state uses ``default`` (uniform unless given).
    """

    def __init__(self, n_a2: int, s1: int | None = None, points=(), rows=None, default=None):
        self.n_a2 = n_a2
        self.s1 = s1
        self.points = np.asarray(points, dtype=np.int64)
        self.rows = np.zeros((0, n_a2)) if rows is None else np.asarray(rows, dtype=float)
        self.default = np.full(n_a2, 1.0 / n_a2) if default is None else np.asarray(default, dtype=float)
        self._index = {int(p): i for i, p in enumerate(self.points)}
        for r in (*self.rows, self.default):
            if np.any(r < -1e-9) or abs(r.sum() - 1.0) > 1e-9:
                raise ValueError(f"row is not a distribution: {r}")

    @classmethod
    def uniform(cls, n_a2: int) -> "StageStrategy2":
        return cls(n_a2)

    def covers(self, s1: int, e: int) -> bool:
        return (self.s1 is None or s1 == self.s1) and e in self._index

    def row(self, e: int, s1: int | None = None) -> np.ndarray:
        if s1 is not None and self.s1 is not None and s1 != self.s1:
            return self.default
        i = self._index.get(int(e))
        return self.default if i is None else self.rows[i]

    def rows_for(self, points: np.ndarray) -> np.ndarray:
        return np.stack([self.row(e) for e in points]) if len(points) else np.zeros((0, self.n_a2))


def _unnormalized_successor(model: GameModel, b: WeightedBelief, a1: int,
                            u2: StageStrategy2, s1_next: int) -> np.ndarray:
    mass = np.zeros(model.n_points)
    rows = u2.rows_for(b.points)
    for i, (e, w) in enumerate(zip(b.points, b.weights)):
        t = model.transitions_from(b.s1, e)
        m = (t.a1 == a1) & (t.s1_next == s1_next)
        if not np.any(m):
            continue
        np.add.at(mass, t.e_next[m], w * rows[i, t.a2[m]] * t.prob[m])
    return mass


def update_belief(model: GameModel, b: WeightedBelief, a1: int, u2: StageStrategy2,
                  s1_next: int, prune_tol: float = PRUNE_TOL) -> WeightedBelief:
    """Posterior over environment points after playing ``a1`` and observing ``s1_next``."""
    mass = _unnormalized_successor(model, b, a1, u2, s1_next)
    total = mass.sum()
    if total <= 0.0:
        st = model.agent_state(s1_next)
        raise ZeroMassObservation(
            f"observation ({model.a1[a1]}, {st.loc1}/{st.per1}) has zero probability")
    post = mass / total
    keep = post >= prune_tol
    pts = np.flatnonzero(keep)
    w = post[keep]
    return WeightedBelief(s1_next, pts, w / w.sum())


def successor_mass(model: GameModel, b: WeightedBelief, a1: int, u2: StageStrategy2,
                   s1_next: int) -> float:
    """Unnormalised posterior mass, i.e. ``P(a1, s1') / u1(a1)``."""
    return float(_unnormalized_successor(model, b, a1, u2, s1_next).sum())


def action_obs_prob(model: GameModel, b: WeightedBelief, u1: StageStrategy1,
                    u2: StageStrategy2) -> dict[tuple[int, int], float]:
    """``P(a1, s1' | b, u1, u2)`` for every pair with positive probability."""
    out: dict[tuple[int, int], float] = {}
    rows = u2.rows_for(b.points)
    for i, (e, w) in enumerate(zip(b.points, b.weights)):
        t = model.transitions_from(b.s1, e)
        contrib = w * u1.probs[t.a1] * rows[i, t.a2] * t.prob
        for a1, sn, c in zip(t.a1, t.s1_next, contrib):
            if c > 0:
                k = (int(a1), int(sn))
                out[k] = out.get(k, 0.0) + float(c)
    return out
