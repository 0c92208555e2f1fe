"""Registering a single curve against a template.

A deformed copy of the template is built, registered back, and the
recovered parameters are compared with the truth and with the exhaustive
grid oracle.
"""

import numpy as np

from frechet_spc.sim import RegisterConfig, SimParams, apply_deformation, register, registration_objective
from frechet_spc.synth import GridSpec, base_curve, brute_force_register

f0 = base_curve("double_peak")
truth = SimParams(alpha=1.4, beta=-0.3, kappa=1.1, zeta=0.06)

rng = np.random.default_rng(7)
fj = apply_deformation(f0, truth)
noisy = fj + rng.normal(0, 0.02, f0.grid.m)  # a little measurement noise

res = register(noisy, f0)
print("true      ", truth)
print("registered", res.params)
print("residual norm %.4f (noise level 0.02)" % res.residual_norm)

# the grid oracle scans (kappa, zeta) exhaustively, amplitude in closed form
oracle = brute_force_register(noisy, f0, GridSpec(n_kappa=61, n_zeta=401))
print("oracle    ", oracle)
print("objectives: register %.6g, oracle %.6g, truth %.6g" % (
    res.objective, registration_objective(noisy, f0, oracle), registration_objective(noisy, f0, truth)))

# with kappa pinned the search is one-dimensional in zeta
pinned = register(apply_deformation(f0, SimParams(0.9, 0.2, 1.0, -0.1)), f0, RegisterConfig(fix_kappa=True))
print("fix_kappa ", pinned.params)
