# Constant damping on a strongly convex quadratic
#
# With gamma = sqrt(2) (so beta = Gamma = 1/sqrt(2)) the gap decays
# exponentially until it meets a floor set by the noise, here 0.1 e^-t.

# %%
import math

import numpy as np

from inertial_sde import DampingSchedule, DiffusionSchedule, TimeGrid, builtin_problem, sample_brownian
from inertial_sde.analysis import gap_curve, linear_rate_fit, pl_floor
from inertial_sde.sde import simulate_inertial

quad = builtin_problem("quadratic", A=[[1.0]])
d = DampingSchedule.constant(math.sqrt(2.0), 0.0)
sigma = DiffusionSchedule.exponential(0.1, 1.0)
grid = TimeGrid(0, 40, 1e-2)
tr = simulate_inertial(quad, sigma, d, grid, sample_brownian(1, grid, 5, 64), x0=1.0, stride=10)

# %%
curve = gap_curve(tr)
floor = pl_floor(1.0, 1.0, sigma, curve.t)
fit = linear_rate_fit(curve, 1.0, floor=floor)
print(f"pre-floor slope {fit.slope:.3f} on [{fit.t_lo:g}, {fit.t_hi:g}], envelope slope -0.5")
for t in (1, 5, 10, 20, 40):
    k = np.searchsorted(curve.t, t)
    print(f"t = {t:>2}   gap = {curve.mean[k]:.3e}   floor = {floor[k]:.3e}")
