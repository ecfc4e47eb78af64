# %% [markdown]
# Optimal thresholds for exponential delay
#
# Solve both thresholds across a range of sampling-rate caps and watch the
# low-rate regime take over: beta approaches 1/f_max and the ratio of the two
# optimal errors drops toward 1/3.

# %%
import numpy as np

from wiener_sampling import Exponential, solve_beta_age, solve_beta_mmse, zero_wait_age_optimal

model = Exponential(1.0)

# %%
print(f"{'f_max':>8} {'beta_mmse':>10} {'beta*f':>8} {'mmse_opt':>9} {'mmse_age':>9} {'ratio':>7}  binding")
for f in np.geomspace(0.01, 2.0, 8):
    m = solve_beta_mmse(model, f)
    a = solve_beta_age(model, f)
    print(f"{f:8.4f} {m.beta:10.4f} {m.beta * f:8.4f} {m.objective:9.4f} {a.objective:9.4f} "
          f"{m.objective / a.objective:7.4f}  {m.binding.value}")

# %% [markdown]
# Without a rate cap the MMSE threshold settles at about 1.898 and the age
# threshold at about 0.901.  Zero-wait is not age-optimal here because the
# delay can be arbitrarily short.

# %%
m, a = solve_beta_mmse(model), solve_beta_age(model)
print("unbounded:", round(m.beta, 6), round(a.beta, 6))
print("zero-wait age-optimal:", zero_wait_age_optimal(model))
