"""
Steering with a designer preference
===================================

On fp-vvadd under a 6 mm2 budget, training settles on decode width 3. Writing
a rule "IF decode is low THEN decode can increase", with the low/enough
boundary placed between 3 and 4, pushes the search to decode width 4.
"""

from fnndse import fnn_core
from fnndse.config import load_config
from fnndse.design_space import preference_boundary
from fnndse.harness import build_problem, init_state
from fnndse.trainer import greedy_design, lf_train

cfg = load_config("table1.yaml", ["objective=[fp-vvadd]", "area.limit=6"])
problem = build_problem(cfg)
d = cfg.space.index_of("decode")
b = preference_boundary(cfg.space, "decode", 3, 4)

for seed in range(3):
    plain = lf_train(init_state(cfg, problem, seed), problem)
    steered = init_state(cfg, problem, seed)
    fnn_core.set_preference(steered.weights, "decode", b, "decode")
    lf_train(steered, problem)
    g = greedy_design(steered, problem)
    print("seed %d: decode %g -> %g   CPI %.4f -> %.4f" % (
        seed, cfg.space.params[d].values[plain.converged_point[d]], cfg.space.params[d].values[g[d]],
        problem.lf(plain.converged_point).cpi, problem.lf(g).cpi))
