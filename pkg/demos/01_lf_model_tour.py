"""
A tour of the analytical model
==============================

The low-fidelity evaluator is a soft minimum over seven throughput bounds.
This script walks one workload through a few designs and shows which bound
binds, what the gradient says, and which parameters the action mask offers.
"""

import numpy as np

from fnndse.config import load_config
from fnndse.design_space import increment, smallest_point
from fnndse.lf_model import area, lf_action_mask, lf_evaluate

cfg = load_config()
space, model = cfg.space, cfg.model
wl = cfg.workloads["dijkstra"]

# Start from the smallest design: every parameter at its first candidate.
p = smallest_point(space)
r = lf_evaluate(space, p, wl, model)
print("smallest design")
print("  CPI %.4f  area %.3f mm2" % (r.cpi, area(space, p, cfg.area_model, model)))
for name, b in sorted(r.bounds.items(), key=lambda kv: kv[1]):
    print("  %-6s bound %.3f" % (name, b))

# The mask keeps parameters whose next candidate is predicted to cut CPI.
mask = lf_action_mask(r, space, p)
print("  offered:", [n for n, m in zip(space.names, mask) if m])

# Greedily follow the steepest predicted gain for a few steps.
for step in range(6):
    r = lf_evaluate(space, p, wl, model)
    mask = lf_action_mask(r, space, p)
    if not mask.any():
        break
    gain = np.where(mask, -r.gradient * [pp.values[min(i + 1, len(pp.values) - 1)] - pp.values[i]
                                         for pp, i in zip(space.params, p)], -np.inf)
    j = int(np.argmax(gain))
    p = increment(space, p, j)
    r2 = lf_evaluate(space, p, wl, model)
    print("step %d: grow %-7s CPI %.4f -> %.4f" % (step, space.names[j], r.cpi, r2.cpi))
