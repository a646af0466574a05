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
# # Which droop constants are certified?
#
# For a second-order turbine-governor the dissipation inequality needs the
# 3x3 matrix W to be negative definite. That happens exactly when K_inv lies
# in an interval centred at 1 - T_m/T_s.

# %%
import numpy as np

from olfc import droop_certificate, droop_interval
from olfc.scenario import certify

for T_s, T_m, D in [(4.0, 5.0, 3.4), (4.6, 6.7, 3.0), (5.0, 10.0, 4.2)]:
    print(f"T_s={T_s} T_m={T_m} D={D}: K_inv in {np.round(droop_interval(T_s, T_m, D), 4)}")

# %% [markdown]
# The tabulated value 0.5 can be read as K_inv or as K. Reading it as K
# gives K_inv = 2, which leaves the interval for two of the generators.

# %%
report = certify("case6_nominal")
for unit in report["units"]:
    print(unit["bus"], {k: v["holds"] for k, v in unit["readings"].items()})

# %% [markdown]
# A sweep over K_inv shows the largest eigenvalue of W crossing zero at
# the interval endpoints.

# %%
K = np.linspace(-4, 3, 15)
print([round(droop_certificate(5.0, 10.0, 4.2, k).W_eigenvalues.max(), 3) for k in K])
