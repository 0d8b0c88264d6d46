"""A single drop of the 400 m x 400 m urban microcell and what its channels look like.

Most AP-UE links are blocked or carry a handful of paths, and in the DFT
beamspace an on-grid path collapses onto one dictionary entry. That sparsity is
what the beam alignment estimators exploit.
"""

import numpy as np

from cfbeam.beamspace import array_response, dft_matrix, nearest_grid_index, to_beamspace
from cfbeam.scenario import SimParams, build_channel_geometry, generate_drop

params = SimParams()
rng = np.random.default_rng(1)
drop = generate_drop(params, rng)
geo = build_channel_geometry(drop, params, rng)

counts = geo.path_counts()
print(f"{params.M} APs, {params.K} UEs, {params.N_s} scatterers")
print(f"links with no path: {np.mean(counts == 0):.0%}, mean paths per link: {counts.mean():.2f}")
print(f"paths dropped beyond the cyclic prefix: {geo.truncated}")

# strongest link of UE 0
k = 0
m = int(np.argmax([lp.gain_var.max() if len(lp) else 0 for lp in geo.links[k]]))
lp = geo.links[k][m]
ell = int(np.argmax(lp.gain_var))
print(f"\nUE {k}: strongest AP is {m}, {len(lp)} paths, "
      f"path loss of the best one {-10 * np.log10(lp.gain_var[ell]):.1f} dB")
print(f"  AoD {np.degrees(lp.aod[ell]):+.1f} deg -> grid index {nearest_grid_index(lp.aod[ell], 32)}")
print(f"  AoA {np.degrees(lp.aoa[ell]):+.1f} deg -> grid index {nearest_grid_index(lp.aoa[ell], 16)}")

# the link's antenna-domain channel and its beamspace image
H = sum(np.sqrt(g) * np.outer(array_response(16, a), array_response(32, d).conj())
        for g, a, d in zip(lp.gain_var, lp.aoa, lp.aod))
Hb = to_beamspace(H, dft_matrix(16), dft_matrix(32))
energy = np.sort((np.abs(Hb) ** 2).ravel())[::-1]
print(f"  beamspace energy in the top 1 / 4 / 16 of 512 entries: "
      f"{energy[:1].sum() / energy.sum():.0%} / {energy[:4].sum() / energy.sum():.0%} / "
      f"{energy[:16].sum() / energy.sum():.0%}")
