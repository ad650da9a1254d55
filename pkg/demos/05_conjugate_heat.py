"""Backward conjugate heat flow along a stored Ricci path.

Run the Ricci flow forward, keep the metrics, then start from the entropy
minimizer at the final time and integrate the conjugate heat equation
back to t = 0.  The total mass of u against the evolving volume form
stays at one.
"""

import numpy as np

from transflow import calculus, entropy, flow, scenarios
from transflow.verify import ricci_path

sc = scenarios.build("conformal-taut", 32)
path, times = ricci_path(sc, T=0.01, n_steps=100)
u_T = np.exp(-entropy.lambda_eigen(path[-1], sc.model).f_min)
us = flow.solve_conjugate_heat(path, times, u_T, sc.model)
for k in range(0, len(times), 20):
    m = float(np.sum(us[k] * calculus.measure(path[k], sc.model)))
    print(f"t = {times[k]:.4f}: mass = {m:.12f}, min u = {us[k].min():.4f}, max u = {us[k].max():.4f}")
