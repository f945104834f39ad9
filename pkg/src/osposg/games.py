"""Small reference games and the grid pursuit-evasion generator."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from osposg.model import GameModel, build_model
from osposg.perception import MlpPerception, ReluNetwork

MOVES = {"up": (0, 1), "down": (0, -1), "left": (-1, 0), "right": (1, 0), "stay": (0, 0)}


def _point_dynamics(n_points: int, n_a1: int, n_a2: int, step) -> list:
    """``[e][a1][a2] -> (targets, probs)`` from ``step(e, a1, a2) -> {target: prob}``."""
    out = []
    for e in range(n_points):
        per_e = []
        for a1 in range(n_a1):
            row = []
            for a2 in range(n_a2):
                dist = step(e, a1, a2)
                row.append((list(dist), list(dist.values())))
            per_e.append(row)
        out.append(per_e)
    return out


def _one_loc_delta1(n_per: int, n_a1: int, n_a2: int) -> np.ndarray:
    return np.ones((n_per, n_a1, n_a2, 1))


def single_game() -> GameModel:
    """One point, one action each, reward 1, discount 0.5: value 2."""
    return build_model(
        loc1=["l"], per1=["o"], a1=["a"], a2=["a"], points=["e"],
        perception=np.zeros((1, 1)), delta1=_one_loc_delta1(1, 1, 1),
        deltaE=[_point_dynamics(1, 1, 1, lambda e, x, y: {0: 1.0})],
        reward=np.ones((1, 1, 1, 1)), beta=0.5, init_s1=0, init_particles={0: 1.0},
        name="single",
    )


def matching_pennies(beta: float = 0.5) -> GameModel:
    """Repeated matching pennies; the maximiser wins 1 on a match and loses 1 otherwise."""
    reward = np.array([[1.0, -1.0], [-1.0, 1.0]]).reshape(1, 1, 2, 2)
    return build_model(
        loc1=["l"], per1=["o"], a1=["H", "T"], a2=["H", "T"], points=["e"],
        perception=np.zeros((1, 1)), delta1=_one_loc_delta1(1, 2, 2),
        deltaE=[_point_dynamics(1, 2, 2, lambda e, x, y: {0: 1.0})],
        reward=reward, beta=beta, init_s1=0, init_particles={0: 1.0}, name="mp",
    )


def hide_game(p_left: float = 0.5, variant: str = "absorb", beta: float = 0.5) -> GameModel:
    """Guess which of two hidden points holds; the informed agent has a single no-op.

    ``variant``:
      * ``"loop"``: both hidden points loop forever under a constant percept;
      * ``"absorb"``: one guess, then an absorbing zero-reward point;
      * ``"split"``: one guess, then the hidden point moves to a point whose
        percept reveals it, then absorbs.
    """
    if variant == "loop":
        points = ["eL", "eR", "done"]
        per1 = ["⊥"]
        step = lambda e, a1, a2: {e: 1.0}  # noqa: E731
    elif variant == "absorb":
        points = ["eL", "eR", "done"]
        per1 = ["⊥"]
        step = lambda e, a1, a2: {2: 1.0}  # noqa: E731
    elif variant == "split":
        points = ["eL", "eR", "done", "eA", "eB"]
        per1 = ["⊥", "A", "B"]
        step = lambda e, a1, a2: {0: {3: 1.0}, 1: {4: 1.0}}.get(e, {2: 1.0})  # noqa: E731
    else:
        raise ValueError(f"unknown variant {variant!r}")
    n = len(points)
    perception = np.zeros((1, n), dtype=np.int64)
    if variant == "split":
        perception[0, 3], perception[0, 4] = 1, 2
    reward = np.zeros((len(per1), n, 2, 1))
    reward[:, 0, 0, 0] = 1.0
    reward[:, 1, 1, 0] = 1.0
    init = {0: p_left, 1: 1.0 - p_left}
    init = {k: w for k, w in init.items() if w > 0}
    return build_model(
        loc1=["l"], per1=per1, a1=["gL", "gR"], a2=["noop"], points=points,
        perception=perception, delta1=_one_loc_delta1(len(per1), 2, 1),
        deltaE=[_point_dynamics(n, 2, 1, step)], reward=reward, beta=beta,
        init_s1=0, init_particles=init, name=f"hide-{variant}",
    )


def random_observable_game(rng: np.random.Generator, n_points: int = 5, n_a1: int = 2,
                           n_a2: int = 2, beta: float = 0.5, branching: int = 2) -> GameModel:
    """Random game in which every point has its own percept (full observation)."""
    delta = []
    for _ in range(n_points):
        per_e = []
        for _ in range(n_a1):
            row = []
            for _ in range(n_a2):
                k = int(rng.integers(1, branching + 1))
                tgt = rng.choice(n_points, size=min(k, n_points), replace=False)
                pr = rng.dirichlet(np.ones(len(tgt)))
                row.append((tgt.tolist(), pr.tolist()))
            per_e.append(row)
        delta.append(per_e)
    reward = np.round(rng.uniform(-1.0, 1.0, size=(n_points, n_a1, n_a2)), 3)
    # percept == point, so agent state s1 == point index and rewards depend on it alone
    full = np.zeros((n_points, n_points, n_a1, n_a2))
    full[:] = reward[None]
    return build_model(
        loc1=["l"], per1=[f"o{e}" for e in range(n_points)],
        a1=[f"x{i}" for i in range(n_a1)], a2=[f"y{j}" for j in range(n_a2)],
        points=[f"e{e}" for e in range(n_points)], perception=np.arange(n_points)[None, :],
        delta1=_one_loc_delta1(n_points, n_a1, n_a2), deltaE=[delta], reward=full, beta=beta,
        init_s1=0, init_particles={0: 1.0}, name="random-observable",
    )


def random_partial_game(rng: np.random.Generator, n_points: int = 6, n_percepts: int = 2,
                        n_loc: int = 2, n_a1: int = 2, n_a2: int = 2, beta: float = 0.6,
                        branching: int = 2) -> GameModel:
    """Random game in which several points share a percept and the local state moves."""
    def sparse_dist(n):
        k = int(rng.integers(1, branching + 1))
        tgt = rng.choice(n, size=min(k, n), replace=False)
        return tgt.tolist(), rng.dirichlet(np.ones(len(tgt))).tolist()

    perception = rng.integers(0, n_percepts, size=(n_loc, n_points))
    n_s1 = n_loc * n_percepts
    delta1 = np.zeros((n_s1, n_a1, n_a2, n_loc))
    for s1 in range(n_s1):
        for x in range(n_a1):
            for y in range(n_a2):
                tgt, pr = sparse_dist(n_loc)
                delta1[s1, x, y, tgt] = pr
    delta = [[[[sparse_dist(n_points) for _ in range(n_a2)] for _ in range(n_a1)]
              for _ in range(n_points)] for _ in range(n_loc)]
    reward = np.round(rng.uniform(-1.0, 1.0, size=(n_s1, n_points, n_a1, n_a2)), 3)
    per0 = int(perception[0, 0])
    init_pts = np.flatnonzero(perception[0] == per0)
    w = rng.dirichlet(np.ones(len(init_pts)))
    return build_model(
        loc1=[f"l{i}" for i in range(n_loc)], per1=[f"o{i}" for i in range(n_percepts)],
        a1=[f"x{i}" for i in range(n_a1)], a2=[f"y{j}" for j in range(n_a2)],
        points=[f"e{e}" for e in range(n_points)], perception=perception, delta1=delta1,
        deltaE=delta, reward=reward, beta=beta, init_s1=per0,
        init_particles={int(e): float(x) for e, x in zip(init_pts, w)}, name="random-partial",
    )


# ---------------------------------------------------------------------------
# pursuit-evasion
# ---------------------------------------------------------------------------

def _nearest_centre_network(centres: np.ndarray, dim: int, offset: int) -> ReluNetwork:
    """Single linear layer whose argmax is the nearest centre of ``x[offset:offset+2]``."""
    w = np.zeros((len(centres), dim))
    w[:, offset:offset + 2] = 2.0 * centres
    b = -np.sum(centres ** 2, axis=1)
    return ReluNetwork([w], [b])


def gen_pursuit_evasion(width: int = 3, height: int = 3, beta: float = 0.7,
                        capture_reward: float = 100.0, pursuer_cell: int = 0,
                        evader_cells: Sequence[int] | None = None,
                        mlp_perception: bool = False) -> GameModel:
    """Grid pursuit-evasion: the pursuer sees only its own cell, the evader sees everything.

    Points are ``(pursuer cell, evader cell)`` pairs plus an absorbing
    ``caught`` point.  Cell ``x + y * width`` has centre ``(x + .5, y + .5)``.
    Off-grid moves leave the mover in place.  Co-location pays
    ``capture_reward`` under every joint action and moves to ``caught``.
    """
    if width < 2 or height < 2:
        raise ValueError("grid must be at least 2x2")
    if not 0.0 < beta < 1.0:
        raise ValueError("discount must lie in (0, 1)")
    n_cells = width * height
    if evader_cells is None:
        evader_cells = range(n_cells)
    evader_cells = sorted(set(int(c) for c in evader_cells))
    if not evader_cells or not all(0 <= c < n_cells for c in evader_cells):
        raise ValueError("evader cells out of range")
    if not 0 <= pursuer_cell < n_cells:
        raise ValueError("pursuer cell out of range")

    moves = list(MOVES)
    centre = np.array([[c % width + 0.5, c // width + 0.5] for c in range(n_cells)])

    def move(cell: int, action: int) -> int:
        dx, dy = MOVES[moves[action]]
        x, y = cell % width + dx, cell // width + dy
        return x + y * width if 0 <= x < width and 0 <= y < height else cell

    caught = n_cells * n_cells
    points = [f"p{p}e{e}" for p in range(n_cells) for e in range(n_cells)] + ["caught"]
    coords = np.array([[*centre[p], *centre[e]] for p in range(n_cells) for e in range(n_cells)]
                      + [[*centre[0], *centre[0]]])

    def step(k: int, a1: int, a2: int) -> dict:
        if k == caught:
            return {caught: 1.0}
        p, e = divmod(k, n_cells)
        if p == e:
            return {caught: 1.0}
        return {move(p, a1) * n_cells + move(e, a2): 1.0}

    percept = np.array([k // n_cells for k in range(caught)] + [0])
    reward = np.zeros((n_cells, caught + 1, 5, 5))
    for c in range(n_cells):
        reward[:, c * n_cells + c] = capture_reward
    init = {pursuer_cell * n_cells + e: 1.0 / len(evader_cells) for e in evader_cells}
    adapter = None
    if mlp_perception:
        adapter = MlpPerception([_nearest_centre_network(centre, 4, 0)], list(range(n_cells)))
        percept = adapter.materialize(coords, None, 1)[0]
    return build_model(
        loc1=["pursuer"], per1=[f"cell-{c}" for c in range(n_cells)], a1=moves, a2=moves,
        points=points, coords=coords, perception=percept[None, :],
        delta1=_one_loc_delta1(n_cells, 5, 5), deltaE=[_point_dynamics(caught + 1, 5, 5, step)],
        reward=reward, beta=beta, init_s1=pursuer_cell, init_particles=init,
        name=f"pe{width}x{height}", adapter=adapter,
    )


PRESETS = {
    "single": single_game,
    "mp": matching_pennies,
    "hide": lambda: hide_game(0.9, "absorb"),
    "hide-loop": lambda: hide_game(0.5, "loop"),
    "hide-split": lambda: hide_game(0.5, "split"),
    "pe3": gen_pursuit_evasion,
}


def preset(name: str) -> GameModel:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
