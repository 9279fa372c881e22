"""
Where the cache boundaries start
================================

The low/enough boundary of each parameter group is trainable. Here the L1 and
L2 boundaries start at 0.2, 0.5 and 0.8; all runs end at similar CPI but the
number of episodes to converge differs.
"""

from fnndse.config import load_config
from fnndse.harness import build_problem, init_state
from fnndse.trainer import lf_train

cfg = load_config("table1.yaml", ["objective=[fp-vvadd]", "area.limit=6"])
problem = build_problem(cfg)

print("seed  center  episodes  CPI     final L1/L2 centers")
for seed in range(3):
    for c in (0.2, 0.5, 0.8):
        st = lf_train(init_state(cfg, problem, seed, {"L1": c, "L2": c}), problem)
        w = st.weights
        l1 = w.inputs[w.input_index("L1")].center
        l2 = w.inputs[w.input_index("L2")].center
        print("%4d  %6.1f  %8d  %.4f  %.3f/%.3f" % (seed, c, st.converged_episode,
                                                  problem.lf(st.converged_point).cpi, l1, l2))
