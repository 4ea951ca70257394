"""Designing the performance envelopes and certifying them offline.

Walks from the three user-chosen envelopes (tracking error, error rate,
input) to the filter gain, the filtered-error envelope and the feasibility
margin.  Run with ``python demos/envelope_design.py``.
"""

# %%
import math

import numpy as np

from tvblf import config
from tvblf.envelopes import PpfEnvelope, convergence_time, phi_r_branches, select_alpha, time_grid
from tvblf.feasibility import check_feasibility

DEG = math.pi / 180

# %% [markdown]
# A performance function starts at phi0 and decays towards phiInf.  The
# convergence time answers "when is the bound down to eps?".

# %%
phi_e = PpfEnvelope(11 * DEG, 1 * DEG, 0.2)
phi_edot = PpfEnvelope(4.5 * DEG, 1.5 * DEG, 0.1)
for eps_deg in (5, 3, 2):
    print(f"|e| bound reaches {eps_deg} deg at t = {convergence_time(phi_e, eps_deg * DEG):.1f} s")

# %% [markdown]
# The filter gain must stay below phi_edot / phi_e everywhere; we take the
# infimum of that ratio minus a small safety margin.

# %%
grid = time_grid(60.0, 0.01)
alpha = select_alpha(phi_e, phi_edot, grid)
print(f"alpha = {alpha:.6f}  (inf ratio - 0.05 = {4.5 / 11 - 0.05:.6f})")

# %% [markdown]
# Two bounds cap the filtered error r = edot + alpha e: one keeps |e| inside
# its funnel, the other keeps |edot| inside its own.  Their pointwise
# minimum switches branch once.

# %%
rate_branch, gap_branch = phi_r_branches(phi_e, phi_edot, alpha)
a, b = np.asarray(rate_branch.value(grid)), np.asarray(gap_branch.value(grid))
switch = grid[np.flatnonzero(np.diff(np.sign(a - b)))[0] + 1]
print(f"branches cross near t = {switch:.2f} s")
for t in (0.0, 5.0, switch, 20.0, 60.0):
    print(f"  t = {t:5.2f}  rate branch {float(rate_branch.value(t)):.5f}  "
          f"gap branch {float(gap_branch.value(t)):.5f}")

# %% [markdown]
# The certificate compares the input envelope with the worst-case torque
# the controller might ask for.  A positive margin everywhere means the
# constraints are compatible.

# %%
problem = config.build(config.load_bundled())
report = check_feasibility(problem.feasibility)
print(f"feasible: {report.feasible}")
print(f"worst margin {report.worst_margin:.4f} N m at t = {report.worst_time:g} s")

# %%
try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    fig, ax = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax[0].plot(grid, a, label="rate branch")
    ax[0].plot(grid, b, label="gap branch")
    ax[0].plot(grid, report.phi_r.value(grid), "k--", label="phi_r")
    ax[0].set_ylabel("rad/s")
    ax[0].legend()
    ax[1].plot(report.grid, report.margins)
    ax[1].set_ylabel("certificate margin [N m]")
    ax[1].set_xlabel("t [s]")
    fig.savefig("envelope_design.png", dpi=120)
    print("saved envelope_design.png")
