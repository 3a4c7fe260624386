"""
Projection noise, Allan variance and phase sensitivity
======================================================

Shots are taken at the maximum-slope point n phi = pi/2.  Binning by N_b and
dividing the two-sample deviation by the fringe slope gives delta_phi(N_b),
to be compared with the linear limit 1/sqrt(N_b).
"""

import math

import numpy as np

from ionsim.interferometer import InterferometerConfig, shot_record
from ionsim.noise import allan_scan, sql_curve

N_b = [4, 8, 16, 32, 64, 128, 256]
M = 10**5

rows = {}
for n, C in [(1, 1.0), (2, 1.0), (3, 1.0), (1, 0.92)]:
    cfg = InterferometerConfig(order=n, contrast=C)
    rec = shot_record(cfg, M, seed=10 * n + int(100 * C))
    rows[(n, C)] = allan_scan(rec, cfg, N_b)

print("N_b    SQL     " + "  ".join(f"n={n},C={C:<4}" for n, C in rows))
for i, nb in enumerate(N_b):
    vals = "  ".join(f"{res.delta_phi[i]:10.5f}" for res in rows.values())
    print(f"{nb:<5} {sql_curve(nb):.5f}  {vals}")

# %% the gain: ratio to the SQL, averaged over bin sizes
for (n, C), res in rows.items():
    excess = np.exp(np.mean(np.log(res.delta_phi / sql_curve(res.N_b))))
    print(f"n={n}, C={C}: delta_phi / SQL = {excess:.3f}   (ideal {1 / (n * C):.3f})")
