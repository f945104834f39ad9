"""Episode simulation, return estimation and bound checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from osposg.agents import Agent1, Agent2
from osposg.hsvi import FrozenBounds
from osposg.model import GameModel
from osposg.shapley import perfect_information_values


class ProperBeliefViolation(AssertionError):
    """The true environment point dropped out of an agent's belief support."""


@dataclass
class Trace:
    seed: int
    profile: str
    horizon: int
    steps: list[dict] = field(default_factory=list)
    discounted_return: float = 0.0
    stopped: str = "horizon"

    def summary(self) -> dict:
        return {"type": "summary", "seed": self.seed, "profile": self.profile,
                "horizon": self.horizon, "steps": len(self.steps),
                "return": self.discounted_return, "stopped": self.stopped}


@dataclass(frozen=True)
class ReturnEstimate:
    mean: float
    se: float
    n: int
    truncation: float


def _tail_scale(model: GameModel) -> float:
    """``max(U - L, |L|, |U|)``: bounds both the tail of a return and differences of tails."""
    rmin, rmax = model.reward_bounds
    lo, hi = rmin / (1.0 - model.beta), rmax / (1.0 - model.beta)
    return max(hi - lo, abs(lo), abs(hi))


def default_horizon(model: GameModel, tol: float = 0.01) -> int:
    """Smallest ``H >= 1`` with ``truncation_bound(model, H) <= tol``."""
    scale = _tail_scale(model)
    if scale <= tol:
        return 1
    return max(1, math.ceil(math.log(tol / scale) / math.log(model.beta)))


def truncation_bound(model: GameModel, horizon: int) -> float:
    """Largest possible discounted reward after step ``horizon``."""
    return model.beta ** horizon * _tail_scale(model)


def absorbing_points(model: GameModel) -> frozenset[int]:
    """Points that map to themselves under every action with zero reward."""
    out = set()
    for e in range(model.n_points):
        if np.any(model.reward[:, e] != 0):
            continue
        ok = True
        for loc in range(model.n_loc):
            for row in model.deltaE[loc][e]:
                for targets, probs in row:
                    if not (len(targets) == 1 and targets[0] == e):
                        ok = False
        if ok:
            out.add(e)
    return frozenset(out)


def _check_proper(agent, e: int, who: str) -> None:
    b = getattr(agent, "belief", None)
    if b is not None and b.weight_of(e) <= 0.0:
        raise ProperBeliefViolation(f"{who} belief lost the true point {e}")


def play_episode(model: GameModel, agent1: Agent1, agent2: Agent2, horizon: int, seed: int,
                 absorbing: Iterable[int] | None = None, profile: str = "",
                 record: bool = True) -> Trace:
    """Simulate one episode; everything random derives from ``seed``."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    absorbing = absorbing_points(model) if absorbing is None else frozenset(absorbing)
    env_ss, ss1, ss2 = np.random.SeedSequence(seed).spawn(3)
    env = np.random.default_rng(env_ss)
    agent1.start(model, np.random.default_rng(ss1))
    agent2.start(model, np.random.default_rng(ss2))
    s1 = model.init_s1
    e = int(model.init_points[env.choice(len(model.init_points), p=model.init_weights)])
    trace = Trace(seed, profile, horizon)
    ret, disc = 0.0, 1.0
    for k in range(horizon):
        if e in absorbing:
            trace.stopped = "absorbed"
            break
        _check_proper(agent1, e, "agent1")
        _check_proper(agent2, e, "agent2")
        before1 = agent1.record() if record else None
        before2_belief = getattr(agent2, "belief", None)
        a1 = agent1.act(s1)
        a2 = agent2.act(s1, e)
        r = float(model.reward[s1, e, a1, a2])
        ret += disc * r
        t = model.transitions_from(s1, e)
        m = (t.a1 == a1) & (t.a2 == a2)
        j = env.choice(int(m.sum()), p=t.prob[m] / t.prob[m].sum())
        s1n, en = int(t.s1_next[m][j]), int(t.e_next[m][j])
        if record:
            st = model.agent_state(s1)
            step = {"type": "step", "seed": seed, "profile": profile, "k": k,
                    "loc1": st.loc1, "per1": st.per1, "point": model.points[e],
                    "belief1": before1["belief"], "u1": agent1.last_probs.tolist(),
                    "u2": agent2.last_row.tolist(),
                    "a1": model.a1[a1], "a2": model.a2[a2], "reward": r,
                    "discounted": disc * r}
            if "alpha1" in before1:
                step["alpha1"] = before1["alpha1"]
            if before2_belief is not None:
                step["belief2"] = before2_belief.to_json(model)["particles"]
            trace.steps.append(step)
        agent1.observe(a1, s1n)
        agent2.observe(a1, s1n)
        s1, e = s1n, en
        disc *= model.beta
    trace.discounted_return = ret
    return trace


def estimate_return(traces: Sequence[Trace], truncation: float = 0.0) -> ReturnEstimate:
    returns = np.array([t.discounted_return for t in traces])
    if len(returns) < 2:
        raise ValueError("need at least two episodes")
    return ReturnEstimate(float(returns.mean()), float(returns.std(ddof=1) / math.sqrt(len(returns))),
                          len(returns), truncation)


def estimate_from_returns(returns: Sequence[float], truncation: float = 0.0) -> ReturnEstimate:
    r = np.asarray(returns, dtype=float)
    return ReturnEstimate(float(r.mean()), float(r.std(ddof=1) / math.sqrt(len(r))), len(r), truncation)


def shapley_solve(model: GameModel, tol: float = 1e-4) -> dict[tuple[int, int], float]:
    """Values of a fully observed model, keyed by ``(s1, point)``, within ``tol``."""
    for loc in range(model.n_loc):
        if len(np.unique(model.perception[loc])) != model.n_points:
            raise ValueError("shapley_solve needs a perception that identifies every point")
    return perfect_information_values(model, tol).values


def bound_report(frozen: FrozenBounds, estimates: dict[str, ReturnEstimate]) -> dict:
    """Check each profile's mean against the bounds at the initial belief.

    Profiles are named ``lb-vs-<adversary>``, ``<heuristic>-vs-ub`` or ``lb-vs-ub``.
    """
    lo, hi = frozen.lb_init, frozen.ub_init
    checks = []
    for profile, est in sorted(estimates.items()):
        m = 4.0 * est.se + est.truncation + 1e-4
        left, _, right = profile.partition("-vs-")
        if left == "lb" and right == "ub":
            checks.append({"name": f"{profile}: mean >= lb - margin", "lhs": est.mean, "rhs": lo,
                           "margin": m, "pass": est.mean >= lo - m})
            checks.append({"name": f"{profile}: mean <= ub + margin", "lhs": est.mean, "rhs": hi,
                           "margin": m, "pass": est.mean <= hi + m})
        elif left == "lb":
            checks.append({"name": f"{profile}: mean >= lb - margin", "lhs": est.mean, "rhs": lo,
                           "margin": m, "pass": est.mean >= lo - m})
        elif right == "ub":
            checks.append({"name": f"{profile}: mean <= ub + margin", "lhs": est.mean, "rhs": hi,
                           "margin": m, "pass": est.mean <= hi + m})
    for c in checks:
        c["pass"] = bool(c["pass"])
    return {"lb_init": lo, "ub_init": hi, "epsilon": frozen.epsilon, "status": frozen.status,
            "estimates": {p: vars(e) for p, e in sorted(estimates.items())},
            "checks": checks, "pass": all(c["pass"] for c in checks)}
