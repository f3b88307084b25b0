"""Walk through GSD shapes at a few means and confidence levels.

Run with ``python3 demos/shapes_and_envelope.py``.
"""

import numpy as np

from gsd import GsdParams, latent_decomposition, moments, pmf, variance_envelope

np.set_printoptions(precision=4, suppress=True)

print("variance envelope on the 1..5 scale")
print(" psi   v_min   v_max   v_bin   C")
for psi in (1.0, 1.5, 2.0, 2.5, 3.0, 3.3, 4.0, 5.0):
    env = variance_envelope(psi, 5)
    print(f"{psi:4.1f} {env.v_min:7.3f} {env.v_max:7.3f} {env.v_bin:7.3f} {env.c:6.3f}")

print("\nprobabilities of scores 1..5")
for psi in (1.3, 2.1, 2.85, 3.9):
    for rho in (0.95, 0.72, 0.38):
        params = GsdParams(psi, rho)
        regime = latent_decomposition(params).regime
        mean, var = moments(params)
        print(f"psi={psi:<5} rho={rho:<5} {pmf(params)}  var={var:.3f}  {regime}")

# the same mean covers every feasible variance as rho moves from 0 to 1
print("\npsi = 3.3, rho from 0 to 1")
for rho in np.linspace(0, 1, 6):
    print(f"rho={rho:.1f} {pmf(GsdParams(3.3, rho))}")
