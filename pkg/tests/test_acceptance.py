"""Acceptance suite; each test records one PASS/FAIL line shown after the run.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import io
import math
import time

import numpy as np
import pytest

from osposg.agents import ADVERSARIES2, HEURISTICS1, InferredAgent, ResolvingAgent
from osposg.arena import (ProperBeliefViolation, bound_report, default_horizon, estimate_return,
                          play_episode, shapley_solve, truncation_bound)
from osposg.belief import WeightedBelief
from osposg.bounds import eval_lower, eval_upper
from osposg.cli import run
from osposg.games import gen_pursuit_evasion, hide_game, random_observable_game, random_partial_game
from osposg.hsvi import HsviState, InfeasibleFloorError, solve_hsvi

PE_EPISODES = 2000
PE_EPSILON = 0.25


def _cli_solve(*argv):
    out = io.StringIO()
    start = time.monotonic()
    code = run(["solve", *argv], stdout=out)
    fields = dict(kv.split("=") for kv in out.getvalue().split())
    return code, float(fields["lb"]), float(fields["ub"]), time.monotonic() - start


def test_criterion_1_analytic_values(tmp_path, acceptance):
    checks = []
    code, lb, ub, secs = _cli_solve("--preset", "single", "--epsilon", "0.01")
    checks.append(("single", code == 0 and 1.99 <= lb <= 2.01 and 1.99 <= ub <= 2.01 and secs < 5,
                   lb, ub, secs))
    code, lb, ub, secs = _cli_solve("--preset", "mp", "--epsilon", "0.01")
    checks.append(("mp", code == 0 and lb - 0.01 <= 0.0 <= ub + 0.01 and secs < 5, lb, ub, secs))
    code, lb, ub, secs = _cli_solve("--preset", "hide", "--epsilon", "0.01")
    checks.append(("hide(0.9,0.1)", code == 0 and lb - 0.01 <= 0.9 <= ub + 0.01 and secs < 5,
                   lb, ub, secs))
    ok = all(c[1] for c in checks)
    acceptance(1, ok, "; ".join(f"{n} lb={lb:.4f} ub={ub:.4f} {s:.2f}s" for n, _, lb, ub, s in checks))
    assert ok, checks


def test_criterion_2_shapley_bracketing(acceptance):
    start = time.monotonic()
    tol = 0.05 + 1e-3
    worst, failures, n_points = 0.0, [], 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        m = random_observable_game(rng, n_points=int(rng.integers(3, 11)), n_a1=int(rng.integers(2, 4)),
                                   n_a2=int(rng.integers(2, 4)), beta=0.5)
        oracle = shapley_solve(m, 1e-4)
        state = HsviState.initial(m)
        for e in range(m.n_points):
            fb = solve_hsvi(m, 0.05, init_belief=WeightedBelief.point_mass(e, e), state=state,
                            probes=0, time_limit=20)
            v = oracle[(e, e)]
            n_points += 1
            worst = max(worst, fb.lb_init - v, v - fb.ub_init)
            if not (fb.lb_init - tol <= v <= fb.ub_init + tol) or fb.status != "converged":
                failures.append((seed, e, fb.lb_init, v, fb.ub_init, fb.status))
    secs = time.monotonic() - start
    ok = not failures and secs < 120
    acceptance(2, ok, f"{n_points} point beliefs in 20 games, {len(failures)} outside, "
                      f"worst excursion {worst:+.2e}, {secs:.1f}s")
    assert ok, failures


def test_criterion_3_resolving_stays_feasible(acceptance):
    steps, infeasible, improper = 0, 0, 0
    for seed in range(10):
        m = random_partial_game(np.random.default_rng(1000 + seed))
        fb = solve_hsvi(m, 0.05, max_trials=20, probes=20)
        for ep in range(5):
            try:
                t = play_episode(m, ResolvingAgent(fb), InferredAgent(fb), 20, seed=ep,
                                 absorbing=(), record=True)
                steps += len(t.steps)
            except InfeasibleFloorError:
                infeasible += 1
            except ProperBeliefViolation:
                improper += 1
    ok = steps >= 1000 and infeasible == 0 and improper == 0
    acceptance(3, ok, f"{steps} resolve/advance steps on 10 models, {infeasible} infeasible LPs, "
                      f"{improper} proper-belief violations")
    assert ok


def _monotone_solve(model, epsilon, time_limit):
    """Solve while tracking the upper bound at stored beliefs and the lower bound at b_init."""
    tracked: list[WeightedBelief] = []
    last_upper: dict = {}
    lower_init = [-math.inf]
    bad = []

    def monitor(state, b):
        if b not in last_upper and len(tracked) < 15:
            tracked.append(b)
            last_upper[b] = math.inf
        for tb in tracked:
            u = eval_upper(state.upsilon, tb)[0]
            if u > last_upper[tb] + 1e-6:
                bad.append(("upper rose", u, last_upper[tb]))
            last_upper[tb] = u
        lo = eval_lower(state.gamma, model.init_belief)[0]
        if lo < lower_init[0] - 1e-9:
            bad.append(("lower fell", lo, lower_init[0]))
        lower_init[0] = lo

    fb = solve_hsvi(model, epsilon, time_limit=time_limit, monitor=monitor)
    return fb, bad


def test_criterion_4_upper_backup_probes(acceptance):
    models = [hide_game(0.9, "absorb"), hide_game(0.5, "loop"), hide_game(0.5, "split")]
    models += [random_partial_game(np.random.default_rng(2000 + s)) for s in range(3)]
    probes, bad = 0, []
    for m in models:
        fb, issues = _monotone_solve(m, 0.05, 3.0)
        probes += fb.stats["backup_probes"]
        bad += issues
    ok = not bad and probes == 100 * len(models)
    acceptance(4, ok, f"{len(models)} solves, {probes} upper-backup probes passed, "
                      f"{len(bad)} monotonicity violations")
    assert ok, bad[:5]


@pytest.fixture(scope="module")
def pe3():
    m = gen_pursuit_evasion(beta=0.7, capture_reward=100.0)
    start = time.monotonic()
    fb = solve_hsvi(m, PE_EPSILON)
    return m, fb, time.monotonic() - start


def _profile(model, frozen, a1, a2, n=PE_EPISODES):
    h = default_horizon(model)
    traces = [play_episode(model, a1, a2, h, seed, record=False) for seed in range(n)]
    return traces, estimate_return(traces, truncation_bound(model, h))


def test_criterion_5_lower_strategy_guarantee(pe3, acceptance):
    m, fb, solve_secs = pe3
    start = time.monotonic()
    est = {f"lb-vs-{name}": _profile(m, fb, ResolvingAgent(fb), cls())[1]
           for name, cls in ADVERSARIES2.items()}
    rep = bound_report(fb, est)
    secs = solve_secs + time.monotonic() - start
    ok = rep["pass"] and fb.status == "converged" and secs < 600
    worst = min(c["lhs"] - (c["rhs"] - c["margin"]) for c in rep["checks"])
    acceptance(5, ok, f"lb={fb.lb_init:.4f} ub={fb.ub_init:.4f} ({fb.status}); "
                      f"{len(est)} adversaries x {PE_EPISODES} episodes; "
                      f"min slack {worst:+.3f}; {secs:.0f}s incl. solve")
    assert ok, rep["checks"]


def test_criterion_6_upper_strategy_guarantee(pe3, acceptance):
    m, fb, _ = pe3
    est = {f"{name}-vs-ub": _profile(m, fb, cls(), InferredAgent(fb))[1]
           for name, cls in HEURISTICS1.items()}
    est["lb-vs-ub"] = _profile(m, fb, ResolvingAgent(fb), InferredAgent(fb))[1]
    rep = bound_report(fb, est)
    cross = est["lb-vs-ub"]
    acceptance(6, rep["pass"], f"{len(est) - 1} heuristics vs ub pass={all(c['pass'] for c in rep['checks'] if 'lb-vs-ub' not in c['name'])}; "
                               f"cross-play mean={cross.mean:.3f} se={cross.se:.3f} in "
                               f"[{fb.lb_init:.3f}, {fb.ub_init:.3f}] +/- margin")
    assert rep["pass"], rep["checks"]


def test_criterion_7_capture_frequency(pe3, acceptance):
    m, fb, _ = pe3
    traces, _ = _profile(m, fb, ResolvingAgent(fb), InferredAgent(fb))
    caught = [t for t in traces if t.stopped == "absorbed"]
    rate = len(caught) / len(traces)
    # a capture at step k pays 100 * beta^k
    first = sum(1 for t in caught if t.discounted_return == 100.0)
    ok = rate > 0.05
    acceptance(7, ok, f"cross-play capture rate {rate:.1%} over {len(traces)} episodes "
                      f"({first} at the first step, {len(caught) - first} later)")
    assert ok


def test_criterion_8_not_a_target(acceptance):
    acceptance(8, None, "continuous-model bound values are out of scope; criteria 1-7 stand in")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
