"""A one-shot guessing game: belief updates and what the resolving player carries forward.

A hidden point is left with probability 0.9 and right otherwise; the
partially informed player earns 1 for naming it.  Guessing left is worth 0.9.
"""

import numpy as np

from osposg import resolver
from osposg.belief import StageStrategy2, WeightedBelief, update_belief
from osposg.bounds import eval_lower, eval_upper
from osposg.games import hide_game
from osposg.hsvi import solve_hsvi

model = hide_game(p_left=0.9, variant="absorb")
b0 = model.init_belief
print("initial belief:", b0.to_json(model)["particles"])

frozen = solve_hsvi(model, epsilon=1e-4)
print(f"bounds at b0: [{frozen.lb_init:.4f}, {frozen.ub_init:.4f}]  ({frozen.status})")

# trials only refine beliefs reachable from b0, so away from P(left)=0.9 the bounds stay loose
for p in (0.0, 0.25, 0.5, 0.75, 1.0):
    pts = [e for e, w in ((0, p), (1, 1 - p)) if w > 0]
    ws = [w for w in (p, 1 - p) if w > 0]
    b = WeightedBelief(model.init_s1, np.array(pts), np.array(ws))
    lo, hi = eval_lower(frozen.gamma, b)[0], eval_upper(frozen.upsilon, b)[0]
    print(f"  P(left)={p:.2f}  lb={lo:.3f}  ub={hi:.3f}")

# one resolving stage: the LP picks a guess and a floor for what follows
state = resolver.init_resolver(frozen, b0, np.random.default_rng(0))
u1, state = resolver.resolve_stage(state)
print("guess probabilities", {a: round(float(q), 3) for a, q in zip(model.a1, u1.probs)})
a1 = int(np.argmax(u1.probs))
s1_next = model.init_s1
nxt = resolver.advance(state, a1, s1_next)
print("belief after guessing:", nxt.belief.to_json(model)["particles"])
print("floor carried forward:", nxt.summary())

# without a percept to separate the points the belief just follows the dynamics
b1 = update_belief(model, b0, a1, StageStrategy2.uniform(model.n_a2), s1_next)
print("plain Bayes update agrees:", b1 == nxt.belief)
