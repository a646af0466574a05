# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Frequency regulation and economic dispatch on the six-bus case
#
# Three generators with second-order turbine-governors, three loads, and
# consensus controllers talking over the links 1-2 and 2-3. The loads step
# up at t = 10 s.

# %%
import matplotlib.pyplot as plt
import numpy as np

from olfc import load_scenario, simulate
from olfc.analysis import dissipation_check, run_metrics

scenario = load_scenario("case6_nominal")
traj = simulate(scenario)
metrics = run_metrics(traj)
metrics.to_dict()

# %% [markdown]
# Generation converges to the cost-minimising dispatch for the new load.
# The dashed lines are that optimum.

# %%
fig, (ax_w, ax_p) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
ax_w.plot(traj.times, traj.channel("omega_g"))
ax_w.set_ylabel("frequency deviation [pu]")
P_opt = np.array([scenario.optimum(t).P_m_opt for t in traj.times[::100]])
ax_p.plot(traj.times, traj.channel("P_m"))
ax_p.set_prop_cycle(None)
ax_p.plot(traj.times[::100], P_opt, "--")
ax_p.set_ylabel("generated power [pu]")
ax_p.set_xlabel("t [s]")
fig.tight_layout()

# %% [markdown]
# The composite storage function never increases along the run.

# %%
storage = dissipation_check(traj)
print(storage.summary())
plt.figure()
plt.semilogy(traj.times, storage.V)
plt.xlabel("t [s]")
plt.ylabel("V")
