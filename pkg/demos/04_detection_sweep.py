"""A small detection-probability sweep, written as plot-ready CSV.

This is the desk-scale version of the full experiment: fewer drops, the same
pipeline. Run the full one with ``cfbeam run --set n_drops=100``.
"""

import sys

from cfbeam.harness import RunConfig, export_results, run_monte_carlo
from cfbeam.scenario import SimParams

n_drops = int(sys.argv[1]) if len(sys.argv) > 1 else 5
config = RunConfig(params=SimParams(), n_drops=n_drops, T_values=(1, 5, 10, 20), N_D_values=(1, 2))
stats = run_monte_carlo(config, progress=lambda i, n: print(f"drop {i}/{n}", file=sys.stderr))

print(f"{'est':4} {'asg':3} {'N_D':>3} {'T':>3}  prob   +/-")
for row in stats.rows():
    print(f"{row['estimator']:4} {row['assignment']:3} {row['N_D']:3d} {row['T']:3d}  "
          f"{row['prob']:.3f} {row['ci95']:.3f}")
export_results(stats, "detection_sweep.csv")
print("written detection_sweep.csv")
