"""Repeated matching pennies: bounds, the two bound-driven players and a sanity check.

The stage game has value 0, so every discounted repetition does too.
Run with ``python demos/matching_pennies.py``.
"""

import numpy as np

from osposg.agents import InferredAgent, ResolvingAgent, Uniform2
from osposg.arena import estimate_return, play_episode
from osposg.games import matching_pennies
from osposg.hsvi import solve_hsvi

model = matching_pennies(beta=0.5)
print(model.name, "points:", model.points, "actions:", model.a1, "vs", model.a2)
print("reward range", model.reward_bounds)

# the loose start: every belief sits between L and U
frozen = solve_hsvi(model, epsilon=1e-3)
print(f"status={frozen.status} lb={frozen.lb_init:+.4f} ub={frozen.ub_init:+.4f} "
      f"trials={frozen.stats['trials']}")
for k, (lo, hi) in enumerate(frozen.stats["history"][:5]):
    print(f"  after trial {k}: [{lo:+.3f}, {hi:+.3f}]")

# both players should mix 50/50 at the root
lb_agent, ub_agent = ResolvingAgent(frozen), InferredAgent(frozen)
lb_agent.start(model, np.random.default_rng(0))
ub_agent.start(model, np.random.default_rng(1))
lb_agent.act(model.init_s1)
ub_agent.act(model.init_s1, int(model.init_points[0]))
print("resolving player mixes", np.round(lb_agent.last_probs, 3))
print("inferred player mixes", np.round(ub_agent.last_row, 3))

# a uniform opponent cannot push the resolving player below lb, up to sampling noise
traces = [play_episode(model, ResolvingAgent(frozen), Uniform2(), 12, seed=s, record=False)
          for s in range(400)]
est = estimate_return(traces)
print(f"lb-vs-uniform: mean {est.mean:+.3f} +- {est.se:.3f} (lb {frozen.lb_init:+.3f})")
