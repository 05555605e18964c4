"""
Exact value functions and estimator moments
===========================================

A small absorbing chain, its value function from a linear solve, the
partial sums of the Neumann series converging to it, and the exact first and
second moments of the filtered estimator under two tilting functions.
"""

import numpy as np

from zvmc import (
    brute_force_moments, compute_constants, exact_moments, solve_mu, truncated_series_mu,
    two_state_model,
)

# Three states: 0 absorbs, 1 and 2 either exit (reward 1) or swap (reward 1).
model = two_state_model()
mu = solve_mu(model)
print("mu =", mu)

# The partial sums sum_{n<=N} P_beta^n h climb monotonically to mu.
for N in (0, 1, 5, 20, 60):
    print(f"N={N:>2}  series={truncated_series_mu(model, N)}")

# Constants for the box [1, 4]: per-step likelihood bounds and the geometric
# absorption rate that caps simulation length.
c = compute_constants(model, mu, 1.0, 4.0)
print(f"kappa={c.kappa:.3g}  H={c.H:.3g}  m={c.m}  gamma={c.gamma}  pi_G={c.pi_G:.3g}")

# Under nu = mu the estimator is constant; under nu = (1, 1) it is not.
for nu in ([2.0, 2.0], [1.0, 1.0]):
    mom = exact_moments(model, nu)
    print(f"nu={nu}: mean={mom.mean}, variance={mom.variance}")

# Enumerating every path up to 60 steps reproduces the recursion.
brute = brute_force_moments(model, [1.0, 1.0], 60)
print("enumerated second moment:", brute.second_moment, " tail mass:", brute.tail_mass)
