"""
Reading what the policy learned
===============================

Train the low-fidelity phase on the reduced space and turn the consequent
matrix into IF-THEN rules. Raising theta_c keeps only the strongest rules.
"""

from fnndse.config import load_config
from fnndse.harness import build_problem, init_state
from fnndse.rule_extract import extract, render_report
from fnndse.trainer import lf_train

cfg = load_config("reduced.yaml")
problem = build_problem(cfg)
state = lf_train(init_state(cfg, problem, seed=0), problem)
print("converged after", state.converged_episode, "episodes to", problem.design_dict(state.converged_point))

rb = extract(state.weights, provenance={"seed": 0, "episode": state.episode})
print(render_report(rb, state.weights))

for theta in (0.1, 0.3, 0.6):
    print("theta_c=%.1f: %d rules" % (theta, len(extract(state.weights, theta))))
