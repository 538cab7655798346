# The inertial process as a time-scaled, averaged first-order process
#
# Solve the scaled first-order equation dY = -Gamma grad f(Y) dt + ..., then
# average Y against the probability measure mu_t built from 1/Gamma.  The
# result should coincide with X from the inertial system when both see the
# same Brownian path.

# %%
import numpy as np

from inertial_sde import DampingSchedule, DiffusionSchedule, TimeGrid, builtin_problem, sample_brownian
from inertial_sde.sde import simulate_inertial, simulate_scaled_first_order
from inertial_sde.transform import average_trajectory, mu_mass, transform_equivalence_check

quad = builtin_problem("quadratic", A=[[1.0]])
d = DampingSchedule.power(4, 1)

# %% mu_t is a probability measure at every t
print("mass of mu_t:", [round(mu_mass(d, t), 9) for t in (1.5, 10.0, 300.0)])

# %% one coupled pair by hand
grid = TimeGrid(1, 10, 5e-3)
sigma = DiffusionSchedule.power(0.5, 3)
path = sample_brownian(1, grid, seed=3, n_paths=1)
x0, v0 = 1.0, 0.5
direct = simulate_inertial(quad, sigma, d, grid, path, x0=x0, v0=v0)
y0 = x0 + d.big_gamma(d.t0) * v0
scaled = simulate_scaled_first_order(quad, sigma.to_s_time(d, 0.0), d, grid, path, x0=y0)
avg = average_trajectory(scaled, d, v0)
print("sup |X_direct - X_averaged| =", float(np.abs(direct.X - avg.X).max()))

# %% the discrepancy is a discretization artefact: it shrinks like h
rep = transform_equivalence_check(quad, sigma, d, 0.0, 0.02, seed=3, x0=x0, v0=v0, n_paths=4)
for h, e in zip(rep.h, rep.discrepancy):
    print(f"h = {h:.5f}   discrepancy = {e:.3e}")
print("empirical order:", round(rep.order, 3))
