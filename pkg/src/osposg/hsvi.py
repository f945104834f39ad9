"""Offline heuristic search value iteration over particle beliefs.

The lower bound is improved by point-based backups that solve the maximising
agent's stage LP over convex combinations of alpha tables; the upper bound by
solving the minimax stage LP against the interpolated belief-value pairs.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import sparse

from osposg import lp as lpmod
from osposg.belief import (StageStrategy1, StageStrategy2, WeightedBelief, action_obs_prob,
                           update_belief)
from osposg.bounds import (AlphaSet, UpsilonSet, add_continuation, eval_lower, eval_upper,
                           gamma_from_json, gamma_to_json, init_bounds, upsilon_from_json,
                           upsilon_to_json)
from osposg.model import GameModel, load_model, model_to_document
from osposg.shapley import perfect_information_values

log = logging.getLogger(__name__)

P_ZERO = 1e-9
CHECK_TOL = 1e-6


class InfeasibleFloorError(RuntimeError):
    """The floored lower-bound stage LP is infeasible."""


class BackupAboveBoundError(RuntimeError):
    """The minimax backup of the upper bound exceeded the upper bound itself."""


class SandwichViolation(RuntimeError):
    """Lower bound above upper bound at a visited belief."""


@dataclass
class ResolveSolution:
    v_star: np.ndarray                 # per particle
    p_star: np.ndarray                 # per a1
    lambda_star: dict                  # (a1, s1') -> (alpha indices, weights)
    objective: float
    u2_rows: np.ndarray | None = None  # minimiser rows per particle, from the LP duals

    @property
    def u1(self) -> StageStrategy1:
        return StageStrategy1(self.p_star)

    def continuation(self, gamma: AlphaSet, a1: int, s1_next: int) -> np.ndarray:
        """Composed alpha table for ``(a1, s1')``; the constant ``L`` table when unreachable."""
        hit = self.lambda_star.get((a1, s1_next))
        p = self.p_star[a1]
        if hit is None or p <= P_ZERO:
            return gamma[0].copy()
        idx, w = hit
        return np.tensordot(w / p, gamma.values[idx], axes=1)


def _particle_transitions(model: GameModel, b: WeightedBelief):
    trans = [model.transitions_from(b.s1, e) for e in b.points]
    owner = np.concatenate([np.full(len(t.prob), i) for i, t in enumerate(trans)])
    cat = lambda f: np.concatenate([getattr(t, f) for t in trans])  # noqa: E731
    a1, a2, sn, en, pr = (cat(f) for f in ("a1", "a2", "s1_next", "e_next", "prob"))
    keep = pr > 0
    return owner[keep], a1[keep], a2[keep], sn[keep], en[keep], pr[keep]


def stage_lp_lower(model: GameModel, gamma: AlphaSet, b: WeightedBelief,
                   floor: np.ndarray | None = None) -> ResolveSolution:
    """Maximin stage LP of the lower bound at ``b``, optionally floored by an alpha table."""
    s1, n = b.s1, len(b)
    na1, na2 = model.n_a1, model.n_a2
    owner, a1, a2, sn, en, pr = _particle_transitions(model, b)
    pair_code = a1 * model.n_s1 + sn
    pairs, pair_of = np.unique(pair_code, return_inverse=True)

    prog = lpmod.LinearProgram("max")
    lb_v = -np.inf if floor is None else floor[s1, model.region_of[b.points]]
    v = prog.add_variables(n, lb=lb_v, name="v")
    p = prog.add_variables(na1, name="p")
    lam_blocks = []
    for code in pairs:
        reps, _ = gamma.unique_slices(int(code % model.n_s1))
        lam_blocks.append((reps, prog.add_variables(len(reps), name=f"lam{int(code)}")))

    # v_i - sum_a1 p_a1 r(i, a1, a2) - beta * sum continuation <= 0, row = i * na2 + a2
    r = model.reward[s1][b.points]                                  # (n, na1, na2)
    rows = [np.repeat(np.arange(n * na2), 1 + na1)]
    cols = [np.tile(np.concatenate([[0], p]), n * na2)]
    base = np.repeat(v, na2)
    cols[0] = cols[0].reshape(n * na2, 1 + na1)
    cols[0][:, 0] = base
    cols[0] = cols[0].ravel()
    vals = [np.column_stack([np.ones(n * na2), -r.transpose(0, 2, 1).reshape(n * na2, na1)]).ravel()]
    row_of = owner * na2 + a2
    reg = model.region_of[en]
    for q, (reps, lam) in enumerate(lam_blocks):
        m = pair_of == q
        if not np.any(m):
            continue
        _, slices = gamma.unique_slices(int(pairs[q] % model.n_s1))
        coef = -model.beta * pr[m][:, None] * slices[:, reg[m]].T    # (k_t, n_reps)
        rows.append(np.repeat(row_of[m], len(reps)))
        cols.append(np.tile(lam, m.sum()))
        vals.append(coef.ravel())
    value_rows = prog.add_constraints(np.concatenate(rows), np.concatenate(cols),
                                      np.concatenate(vals), "<=", np.zeros(n * na2))
    for q, (reps, lam) in enumerate(lam_blocks):
        prog.add_constraint(np.concatenate([lam, [p[pairs[q] // model.n_s1]]]),
                            np.concatenate([np.ones(len(lam)), [-1.0]]), "=", 0.0)
    prog.add_constraint(p, np.ones(na1), "=", 1.0)
    prog.add_objective(v, b.weights)
    sol = lpmod.solve(prog)
    if sol.status != "optimal":
        raise InfeasibleFloorError(f"lower-bound stage LP is {sol.status} at belief of size {n}")
    x = sol.x
    probs = np.clip(x[p], 0.0, None)
    probs /= probs.sum()
    lambda_star = {}
    for q, (reps, lam) in enumerate(lam_blocks):
        code = int(pairs[q])
        lambda_star[(code // model.n_s1, code % model.n_s1)] = (reps, np.clip(x[lam], 0.0, None))
    u2_rows = None
    if sol.duals is not None:
        u2_rows = _normalise_rows(sol.duals["<="][value_rows].reshape(n, na2))
    return ResolveSolution(x[v].copy(), probs, lambda_star, sol.objective, u2_rows)


def _normalise_rows(weights: np.ndarray) -> np.ndarray:
    """Clip to non-negative and normalise each row; rows without mass become uniform."""
    w = np.clip(weights, 0.0, None)
    w[w < 1e-12] = 0.0
    tot = w.sum(axis=1, keepdims=True)
    return np.where(tot > 0, w / np.where(tot > 0, tot, 1.0), 1.0 / w.shape[1])


def backup_lower(model: GameModel, gamma: AlphaSet, b: WeightedBelief):
    """Point-based lower-bound update at ``b``; returns ``(alpha index, stage solution)``."""
    sol = stage_lp_lower(model, gamma, b)
    s1, L = b.s1, gamma.L
    U = model.reward_bounds[1] / (1.0 - model.beta)
    p = sol.p_star
    cont = {}
    for (a1, sn), (idx, w) in sol.lambda_star.items():
        if p[a1] > P_ZERO:
            cont[(a1, sn)] = (w / p[a1]) @ gamma.values[idx, sn, :]
    r = model.reward[s1]                                             # (n_points, na1, na2)
    stage = np.einsum("a,eab->eb", p, r)
    consistent = model.consistent_points(s1)
    point_val = np.full(model.n_points, np.inf)
    for e in consistent:
        t = model.transitions_from(s1, e)
        cv = np.full(len(t.prob), L)
        for k in range(len(t.prob)):
            c = cont.get((int(t.a1[k]), int(t.s1_next[k])))
            if c is not None:
                cv[k] = c[model.region_of[t.e_next[k]]]
        contrib = p[t.a1] * t.prob * cv
        val = stage[e] + model.beta * np.bincount(t.a2, weights=contrib, minlength=model.n_a2)
        point_val[e] = val.min()
    _, best = eval_lower(gamma, b)
    table = gamma[best].copy()
    regions = np.unique(model.region_of[consistent])
    for rg in regions:
        table[s1, rg] = point_val[model.region_of == rg].min()
    np.clip(table, L, U, out=table)
    k = gamma.append(table, provenance=f"backup@s{s1}n{len(b)}")
    return k, sol


def stage_lp_upper(model: GameModel, upsilon: UpsilonSet, b: WeightedBelief
                   ) -> tuple[float, StageStrategy2]:
    """Minimax stage LP of the upper bound at ``b``: value and the minimiser's rows."""
    y, u2, _ = _stage_lp_upper(model, upsilon, b)
    return y, u2


def _stage_lp_upper(model: GameModel, upsilon: UpsilonSet, b: WeightedBelief):
    """As ``stage_lp_upper``, plus the maximiser's strategy from the LP duals (or ``None``)."""
    s1, n = b.s1, len(b)
    na1, na2 = model.n_a1, model.n_a2
    owner, a1, a2, sn, en, pr = _particle_transitions(model, b)

    prog = lpmod.LinearProgram("min")
    v = prog.add_variables(1, lb=-np.inf, name="v")
    u2 = prog.add_variables(n * na2, name="u2").reshape(n, na2)
    prog.add_constraints(np.repeat(np.arange(n), na2), u2.ravel(), np.ones(n * na2), "=", np.ones(n))

    r = model.reward[s1][b.points]                                   # (n, na1, na2)
    w = b.weights
    u2_col = u2[owner, a2]
    mass = w[owner] * pr
    action_rows = np.empty(na1, dtype=np.int64)
    for x in range(na1):
        row_cols = [v, u2.ravel()]
        row_vals = [np.ones(1), -(w[:, None] * r[:, x, :]).ravel()]
        mx = a1 == x
        for target in np.unique(sn[mx]):
            m = mx & (sn == target)
            tau_pts, tau_row = np.unique(en[m], return_inverse=True)
            tau_mat = sparse.coo_array((mass[m], (tau_row, u2_col[m])),
                                       shape=(len(tau_pts), prog.n_vars)).tocsr()
            (cols, coefs, _), _ = add_continuation(prog, upsilon, int(target), tau_pts, tau_mat, None)
            row_cols.append(cols)
            row_vals.append(-model.beta * coefs)
        action_rows[x] = prog.add_constraint(np.concatenate(row_cols), np.concatenate(row_vals), ">=", 0.0)
    prog.add_objective(v, [1.0])
    sol = lpmod.solve(prog)
    if not sol.optimal:
        raise lpmod.LpNumericalError(f"upper-bound stage LP returned {sol.status}")
    rows = np.clip(sol.x[u2], 0.0, None)
    rows[rows < 1e-12] = 0.0
    rows /= rows.sum(axis=1, keepdims=True)
    u1 = None
    if sol.duals is not None:
        u1 = _normalise_rows(sol.duals[">="][action_rows][None, :])[0]
    return float(sol.x[v[0]]), StageStrategy2(na2, s1, b.points, rows), u1


def backup_upper(upsilon: UpsilonSet, b: WeightedBelief, y_star: float) -> UpsilonSet:
    upsilon.append(b, min(y_star, upsilon.U))
    return upsilon


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------

@dataclass
class HsviState:
    model: GameModel
    gamma: AlphaSet
    upsilon: UpsilonSet
    L: float
    U: float
    max_depth: int = 50
    deadline: float = math.inf
    check_sandwich: bool = True
    monitor: Callable | None = None
    backups: int = 0
    max_depth_reached: int = 0

    @classmethod
    def initial(cls, model: GameModel, point_values: dict | None = None, **kw) -> "HsviState":
        gamma, upsilon, L, U = init_bounds(model, point_values)
        return cls(model, gamma, upsilon, L, U, **kw)

    def lower(self, b: WeightedBelief) -> float:
        return eval_lower(self.gamma, b)[0]

    def upper(self, b: WeightedBelief) -> float:
        return eval_upper(self.upsilon, b)[0]

    def gap(self, b: WeightedBelief) -> float:
        return self.upper(b) - self.lower(b)

    def backup(self, b: WeightedBelief) -> tuple[StageStrategy1, StageStrategy2]:
        """Back up both bounds at ``b``; return the strategies that steer exploration.

        These are the maximiser's strategy of the upper-bound stage game and the
        minimiser's strategy of the lower-bound stage game, under which the gap
        at ``b`` is at most ``beta`` times the expected successor gap.
        """
        _, sol = backup_lower(self.model, self.gamma, b)
        y, u2_upper, u1_upper = _stage_lp_upper(self.model, self.upsilon, b)
        backup_upper(self.upsilon, b, y)
        self.backups += 1
        if self.check_sandwich:
            lo, hi = self.lower(b), self.upper(b)
            if lo > hi + CHECK_TOL:
                raise SandwichViolation(f"lower {lo} > upper {hi}")
        if self.monitor is not None:
            self.monitor(self, b)
        u1 = StageStrategy1(u1_upper) if u1_upper is not None else StageStrategy1.uniform(self.model.n_a1)
        u2 = u2_upper if sol.u2_rows is None else StageStrategy2(self.model.n_a2, b.s1, b.points, sol.u2_rows)
        return u1, u2


def explore(state: HsviState, b: WeightedBelief, depth: int, epsilon: float) -> None:
    """One depth-first HSVI trial from ``b`` (recursive)."""
    beta = state.model.beta
    state.max_depth_reached = max(state.max_depth_reached, depth)
    if state.gap(b) <= epsilon * beta ** (-depth) or depth >= state.max_depth:
        return
    u1, u2 = state.backup(b)
    if time.monotonic() > state.deadline:
        return
    target = epsilon * beta ** (-(depth + 1))
    probs = action_obs_prob(state.model, b, u1, u2)
    best, best_score = None, 0.0
    for (a1, sn), pa in sorted(probs.items()):
        if pa <= 0.0:
            continue
        nb = update_belief(state.model, b, a1, u2, sn)
        score = pa * (state.gap(nb) - target)
        if score > best_score:
            best, best_score = nb, score
    if best is None:
        return
    explore(state, best, depth + 1, epsilon)
    state.backup(b)


def _probe_beliefs(state: HsviState, n: int, rng: np.random.Generator) -> list[WeightedBelief]:
    model, pairs = state.model, state.upsilon.pairs
    out = []
    for _ in range(n):
        base = pairs[rng.integers(len(pairs))].belief
        s1 = base.s1
        dense = base.dense(model.n_points)
        same = [pr.belief for pr in pairs if pr.belief.s1 == s1]
        for other in rng.choice(len(same), size=min(2, len(same)), replace=False):
            dense += rng.random() * same[other].dense(model.n_points)
        pts = model.consistent_points(s1)
        dense[pts] += rng.random(len(pts)) * rng.random() * (rng.random(len(pts)) < 0.3)
        keep = np.flatnonzero(dense > 1e-9)
        w = dense[keep]
        out.append(WeightedBelief(s1, keep, w / w.sum()))
    return out


def check_upper_backups(state: HsviState, n_probes: int = 100, seed: int = 0) -> int:
    """Assert ``[T V_ub](b) <= V_ub(b)`` on random probe beliefs; return the number checked."""
    rng = np.random.default_rng(seed)
    for b in _probe_beliefs(state, n_probes, rng):
        y, _ = stage_lp_upper(state.model, state.upsilon, b)
        ub = state.upper(b)
        if y > ub + CHECK_TOL:
            raise BackupAboveBoundError(f"stage value {y} exceeds upper bound {ub}")
    return n_probes


@dataclass
class FrozenBounds:
    gamma: AlphaSet
    upsilon: UpsilonSet
    L: float
    U: float
    lb_init: float
    ub_init: float
    epsilon: float
    status: str
    model_hash: str
    stats: dict = field(default_factory=dict)
    _lower_cache: dict = field(default_factory=dict, repr=False)
    _upper_cache: dict = field(default_factory=dict, repr=False)

    @property
    def gap(self) -> float:
        return self.ub_init - self.lb_init

    @property
    def model(self) -> GameModel:
        return self.gamma.model

    def to_json(self) -> dict:
        return {
            "model_hash": self.model_hash,
            "status": self.status,
            "epsilon": self.epsilon,
            "epsilon_achieved": self.gap,
            "lb_init": self.lb_init,
            "ub_init": self.ub_init,
            "L": self.L,
            "U": self.U,
            "lambda_K": self.upsilon.lipschitz,
            "lambda_K_note": "conservative Lipschitz constant (U - L) / 2",
            "agent_states": [[s.loc1, s.per1] for s in map(self.model.agent_state, range(self.model.n_s1))],
            "regions": list(self.model.regions),
            "gamma": gamma_to_json(self.gamma),
            "upsilon": upsilon_to_json(self.upsilon),
            "stats": self.stats,
            "model": model_to_document(self.model),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, model: GameModel | None = None) -> "FrozenBounds":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_json(doc, model)

    @classmethod
    def from_json(cls, doc: dict, model: GameModel | None = None) -> "FrozenBounds":
        """Rebuild bounds; without ``model`` the embedded model document is used."""
        if model is None:
            model = load_model(doc["model"])
        if doc["model_hash"] != model.model_hash:
            raise ValueError("bounds file was computed for a different model")
        gamma = gamma_from_json(model, doc["L"], doc["gamma"])
        upsilon = upsilon_from_json(model, doc["lambda_K"], doc["U"], doc["upsilon"])
        return cls(gamma, upsilon, doc["L"], doc["U"], doc["lb_init"], doc["ub_init"],
                   doc["epsilon"], doc["status"], doc["model_hash"], doc.get("stats", {}))

    def check_model(self, model: GameModel) -> None:
        if model.model_hash != self.model_hash:
            raise ValueError("model hash does not match the bounds")


def solve_hsvi(model: GameModel, epsilon: float, *, max_trials: int = 10_000,
               time_limit: float | None = None, max_depth: int = 50, probes: int = 100,
               init_belief: WeightedBelief | None = None, seed: int = 0,
               monitor: Callable | None = None, state: HsviState | None = None,
               upper_init: str = "constant") -> FrozenBounds:
    """Run HSVI trials from the initial belief until its gap is at most ``epsilon``.

    :param upper_init: ``"constant"`` starts the upper bound from ``U`` only;
        ``"perfect-info"`` also seeds it with the perfect-information values of
        every joint state.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    b0 = model.init_belief if init_belief is None else init_belief
    deadline = math.inf if time_limit is None else time.monotonic() + time_limit
    if state is None:
        if upper_init == "perfect-info":
            point_values = perfect_information_values(model).upper()
        elif upper_init == "constant":
            point_values = None
        else:
            raise ValueError(f"unknown upper_init {upper_init!r}")
        state = HsviState.initial(model, point_values, max_depth=max_depth, monitor=monitor)
        if init_belief is not None:
            state.upsilon.append(b0, state.U)
    state.deadline = deadline
    start = time.monotonic()
    trials = 0
    gap = state.gap(b0)
    history = [(state.lower(b0), state.upper(b0))]
    while gap > epsilon and trials < max_trials and time.monotonic() < deadline:
        explore(state, b0, 0, epsilon)
        trials += 1
        lo, hi = state.lower(b0), state.upper(b0)
        history.append((lo, hi))
        gap = hi - lo
        log.debug("trial %d: lb=%.6f ub=%.6f gap=%.6f |G|=%d |Y|=%d",
                  trials, lo, hi, gap, len(state.gamma), len(state.upsilon))
    status = "converged" if gap <= epsilon else "limit"
    checked = check_upper_backups(state, probes, seed) if probes else 0
    lo, hi = history[-1]
    stats = {
        "trials": trials, "backups": state.backups, "seconds": time.monotonic() - start,
        "alpha_count": len(state.gamma), "pair_count": len(state.upsilon),
        "backup_probes": checked, "max_depth_reached": state.max_depth_reached,
        "history": history, "upper_init": upper_init,
    }
    return FrozenBounds(state.gamma, state.upsilon, state.L, state.U, lo, hi, epsilon, status,
                        model.model_hash, stats)
