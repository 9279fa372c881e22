"""
Exploring a reduced space end to end
====================================

Four parameters, five seeds, ten synthetic high-fidelity evaluations per seed.
The space is small enough to enumerate, so regrets are measured against the
true optimum.
"""

import tempfile
from pathlib import Path

from fnndse.config import load_config
from fnndse.harness import run_experiment

cfg = load_config("reduced.yaml")
print("space size:", cfg.space.size(), "objective:", [w.name for w in cfg.objective_workloads])

out = Path(tempfile.mkdtemp(prefix="fnndse-demo-"))
report = run_experiment(cfg, out)
print(report.table())

# Each seed leaves a run log, a checkpoint and a rule report behind.
print("artifacts in", out)
for f in sorted(out.iterdir()):
    print("  ", f.name)
