"""Pursuit-evasion on a 3x3 grid, end to end.

The pursuer sees only its own cell; the evader sees both.  Capture pays 100
and ends the game, so play is worth something only while the evader can be
cornered.  The script solves for bounds (about a minute), then checks a few
matchups against them the way ``osposg eval`` does.
"""

import numpy as np

from osposg import agents
from osposg.arena import bound_report, default_horizon, estimate_return, play_episode, truncation_bound
from osposg.games import gen_pursuit_evasion
from osposg.hsvi import solve_hsvi
from osposg.shapley import perfect_information_values

model = gen_pursuit_evasion(3, 3, beta=0.7)
print(f"{model.name}: {model.n_points} points, {model.n_s1} pursuer states")
print("initial belief covers", len(model.init_points), "evader cells, pursuer in", model.agent_state(model.init_s1).per1)

# with the evader's position revealed, escape is always possible off co-location
full = perfect_information_values(model).values
together = np.all(model.coords[:, :2] == model.coords[:, 2:4], axis=1)
off = [v for (_, e), v in full.items() if not together[e]]
print(f"perfect-information value off co-location: max {max(off):.3f}")

frozen = solve_hsvi(model, epsilon=0.5, time_limit=180)
print(f"bounds [{frozen.lb_init:.3f}, {frozen.ub_init:.3f}] after {frozen.stats['trials']} trials "
      f"({frozen.status}, {frozen.stats['seconds']:.0f}s)")

horizon = default_horizon(model)
print("horizon", horizon, "tail at most", round(truncation_bound(model, horizon), 4))

profiles = {
    "lb-vs-ub": (agents.ResolvingAgent(frozen), agents.InferredAgent(frozen)),
    "lb-vs-flee": (agents.ResolvingAgent(frozen), agents.Flee2()),
    "sweep-vs-ub": (agents.Sweep1(), agents.InferredAgent(frozen)),
}
estimates = {}
for name, (a1, a2) in profiles.items():
    traces = [play_episode(model, a1, a2, horizon, seed=s, profile=name, record=False)
              for s in range(300)]
    estimates[name] = estimate_return(traces, truncation_bound(model, horizon))
    # a capture pays 100 at once; under these players it only happens when play starts co-located
    caught = sum(t.discounted_return >= 100 for t in traces)
    print(f"{name:12s} mean {estimates[name].mean:7.3f} +- {estimates[name].se:.3f}  "
          f"first-step captures {caught}/{len(traces)}")

report = bound_report(frozen, estimates)
for c in report["checks"]:
    print("PASS" if c["pass"] else "FAIL", c["name"])
