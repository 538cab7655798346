# Picking the minimum norm minimizer with a vanishing Tikhonov term
#
# f(x) = (x_1 - 1)^2 / 2 has the whole line {x_1 = 1} as minimizers.  Started
# at (0, 5), the plain inertial system keeps the x_2 coordinate.  Adding
# eps(t) x with eps = theta(t)^-0.9 drags it to the point (1, 0) of least norm.

# %%
import numpy as np

from inertial_sde import DampingSchedule, DiffusionSchedule, TikhonovSchedule, TimeGrid, builtin_problem
from inertial_sde.tikhonov import check_tikhonov_conditions, min_norm_convergence_run, regularization_path

f = builtin_problem("quadratic", A=[[1.0, 0.0], [0.0, 0.0]], b=[1.0, 0.0])
d = DampingSchedule.power(4, 1)
ts = TikhonovSchedule(0.9, d, s0=1.0)

# %% the regularized minimizers x_eps walk toward x* as eps shrinks
rp = regularization_path(f, np.geomspace(1, 1e-4, 5))
for e, x in zip(rp.eps, rp.x_eps):
    print(f"eps = {e:.0e}   x_eps = {np.round(x, 4)}")

# %%
cond = check_tikhonov_conditions(d, ts, f, 1e3)
print("conditions:", cond.t1_ok, cond.t2_ok, cond.t3_ok, "r threshold", cond.r_threshold)

# %% shorter horizon than the acceptance run, still clear
rep = min_norm_convergence_run(f, d, ts, DiffusionSchedule.power(0.5, 3), TimeGrid(1, 300, 5e-3),
                               n_paths=8, seed=1, x0=[0.0, 5.0], stride=200)
print("E|X - x*|^2 with Tikhonov:   ", rep.sq_dist[-1])
print("E|X - x*|^2 without Tikhonov:", rep.sq_dist_control[-1])
