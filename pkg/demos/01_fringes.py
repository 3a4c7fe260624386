"""
Fringes of the n-th order interferometer
========================================

Beamsplitter = pi/2 pulse on the n-th blue sideband, phase = trap-frequency
step.  The output oscillates n times faster than the linear (n=1) case.
"""

import math

import numpy as np

from ionsim.interferometer import InterferometerConfig, fit_fringe, run_point, sweep

dwz = 2 * math.pi * 20e3  # 20 kHz trap-frequency step
t = np.linspace(0, 4 * math.pi / dwz, 121)  # two n=1 fringes

# %% noiseless state-vector sweeps
for n in (1, 2, 3):
    cfg = InterferometerConfig(order=n, delta_omega_z=dwz)
    fit = fit_fringe(sweep(cfg, t))
    print(f"n={n}: fitted frequency / dwz = {fit.frequency / dwz:.6f}, contrast = {fit.contrast:.6f}")

# %% compare with the closed form at a few phases
cfg = InterferometerConfig(order=3, delta_omega_z=dwz)
for phi in (0.0, math.pi / 6, math.pi / 3, math.pi / 2):
    p = run_point(cfg, phi / dwz)
    print(f"phi={phi:.4f}  simulated={p:.12f}  (1-cos 3phi)/2={(1 - math.cos(3 * phi)) / 2:.12f}")

# %% reduced contrast and projection noise
cfg = InterferometerConfig(order=1, delta_omega_z=dwz, contrast=0.92)
noisy = sweep(cfg, t, shots_per_point=200, seed=1)
fit = fit_fringe(noisy)
print(f"200 shots/point, C=0.92: fitted C = {fit.contrast:.3f} +- {fit.stderr[1]:.3f}")
print(noisy.to_csv().splitlines()[:4])
