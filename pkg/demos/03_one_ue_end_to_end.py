"""One beacon phase seen from a single UE: observables, both estimators, the truth.

The UE only measures energies. MCO spreads each energy over the (AoA, AoD)
pairs its beams touched and picks the pair with the highest mean; SCO fits a
non-negative power map to all energies at once.
"""

import numpy as np

from cfbeam.airlink import synthesize_observables
from cfbeam.estimators import mco_accumulate, mco_estimate, sco_estimate, select_top_pairs
from cfbeam.harness import compute_ground_truth, drop_seed, make_assignment, make_drop, substream_seed
from cfbeam.scenario import SimParams

params = SimParams()
seed = drop_seed(0, 0)
drop, geo, patterns, codebook = make_drop(params, seed)
assignment = make_assignment("lb", drop, len(patterns), seed)
truth = compute_ground_truth(geo, assignment, params.N_AP, params.N_UE)
obs = synthesize_observables(geo, assignment, patterns, codebook, params, substream_seed(seed, 5))  # the beacon-phase sub-stream
print(f"noise per subcarrier {obs.sigma2:.2e} W, observables tensor {obs.c.shape}")

k = 0
for T in (5, 20):
    print(f"\nUE {k}, T = {T} beacon slots")
    mco_all, sco_all = [], []
    for d in range(len(patterns)):
        c = obs.c[k, d, :T]
        C, V = mco_accumulate(c, patterns[d].tx_masks, codebook.rx_masks[k], visits=True)
        mco_all.append(mco_estimate(C, V, ue=k, pattern=d))
        sco_all.append(sco_estimate(c, patterns[d].tx_masks, codebook.rx_masks[k], obs.sigma2,
                                    ue=k, pattern=d))
    for d in truth.ranked_patterns(k)[:3]:
        m, s = mco_all[d], sco_all[d]
        print(f"  pattern {d}: truth (AoD {truth.aod_index[k, d]:2d}, AoA {truth.aoa_index[k, d]:2d})"
              f"  MCO ({m.aod_index:2d}, {m.aoa_index:2d})  SCO ({s.aod_index:2d}, {s.aoa_index:2d})")
    best = select_top_pairs(mco_all, 2)
    print(f"  MCO report (N_D=2): patterns {[e.pattern for e in best]}")
