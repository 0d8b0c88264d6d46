"""Data patterns and the two ways of handing them to the APs.

APs sharing a pattern are indistinguishable at the UEs, so the location-based
assignment clusters the APs and gives every AP of a cluster its own pattern.
Same-pattern APs then sit in different clusters, far apart, while the balanced
random assignment pays no attention to geometry.
"""

import itertools

import numpy as np

from cfbeam.patterns import (assign_patterns_lb, assign_patterns_random, build_patterns,
                             num_patterns)
from cfbeam.scenario import SimParams, generate_drop

params = SimParams()
D = num_patterns(params.N_C, params.Q, params.n_AP)
print(f"N_C={params.N_C}, Q={params.Q}, n_AP={params.n_AP} -> D = {D} data patterns")

patterns = build_patterns(D, params.T_max, params.n_AP, params.Q, params.nu_AP, params.N_AP,
                          np.random.default_rng(0), N_C=params.N_C)
p = patterns[0]
print(f"pattern 0, slot 0, chain 0: subcarriers {p.subcarriers[0, 0, 0]}..{p.subcarriers[0, 0, -1]}, "
      f"fingers at {np.flatnonzero(p.tx_masks[0, 0]).tolist()}")


def nearest_cochannel(pos, assignment):
    """Mean distance from each AP to its closest AP with the same pattern."""
    out = []
    for d in range(assignment.D):
        members = assignment.members(d)
        for i in members:
            others = [np.linalg.norm(pos[i] - pos[j]) for j in members if j != i]
            if others:
                out.append(min(others))
    return np.mean(out)


lb, ra = [], []
for seed in range(50):
    rng = np.random.default_rng(seed)
    pos = generate_drop(params, rng).ap_positions
    lb.append(nearest_cochannel(pos, assign_patterns_lb(pos, D, rng)))
    ra.append(nearest_cochannel(pos, assign_patterns_random(params.M, D, rng)))
print(f"\nnearest same-pattern AP, mean over 50 layouts: LB {np.mean(lb):.0f} m, RA {np.mean(ra):.0f} m")

pos = generate_drop(params, np.random.default_rng(3)).ap_positions
a = assign_patterns_lb(pos, D, np.random.default_rng(3))
print(f"k-means objective by iteration: {[round(v) for v in a.objective_history]}")
print(f"cluster sizes: {np.bincount(a.clusters).tolist()}")
