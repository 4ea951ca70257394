"""Pitch tracking on the bundled helicopter model, then stressing it.

Three runs: the nominal one, the same loop behind a tight torque limit,
and a pitch disturbance at the largest certified amplitude.  Run with
``python demos/closed_loop_tracking.py``; each run takes a few seconds.
"""

# %%
import dataclasses
import math

import numpy as np

from tvblf import config, sim
from tvblf.envelopes import ConstantEnvelope

DEG = math.pi / 180
doc = config.load_bundled()
problem = config.build(doc)
cfg = problem.sim

# %% [markdown]
# The nominal run.  Every margin is "envelope minus signal" and must stay
# positive; the summary records the smallest value seen and when.

# %%
tr, summary = sim.run(cfg)
print("violations:", summary.violations)
for name, (value, t) in summary.min_margins.items():
    print(f"  smallest {name:4s} margin {value:.4g} at t = {t:g} s")
print(f"|e(60)| = {summary.terminal_error_norm:.2e} rad, "
      f"|theta_hat| peaked at {summary.max_theta_hat_norm:.3f}")

# %%
i = np.searchsorted(tr["t"], [0, 1, 5, 20, 60])
print(" t      pitch [deg]  ref [deg]   |tau| [N m]")
for k in i:
    ref = sim.reference_eval(cfg.reference, tr["t"][k])[0][0]
    print(f"{tr['t'][k]:5.1f}   {tr['q1'][k] / DEG:9.4f}  {ref / DEG:9.4f}   {tr['tau_norm'][k]:.4f}")

# %% [markdown]
# Clamp the torque at 2.2 N m, only a little above what holding the arm
# against gravity needs.  The saturation law scales the command radially
# and the barrier still holds.

# %%
tight = dataclasses.replace(cfg.envelopes, phi_tau=ConstantEnvelope(2.2))
tr_sat, s_sat = sim.run(dataclasses.replace(cfg, envelopes=tight, T=20.0))
print(f"saturated on {100 * s_sat.saturation_duty_cycle:.2f} % of steps, "
      f"violations {s_sat.violations}")

# %% [markdown]
# A pitch disturbance of 0.5 N m.  The estimate bound is widened to 4 so
# the adaptive law has room to absorb it.

# %%
dist = config.build(config.variant(doc, **{
    "disturbance": {"kind": "sinusoid", "amplitude": [0.5, 0.0], "omega": 1.0},
    "controller.thetaBar": 4.0}))
tr_d, s_d = sim.run(dist.sim)
print(f"disturbed run: violations {s_d.violations}, |e(60)| = {s_d.terminal_error_norm:.2e} rad")

# %%
try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    fig, ax = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
    for label, t in (("nominal", tr), ("disturbed", tr_d)):
        ax[0].plot(t["t"], t["e_norm"], label=label)
        ax[1].plot(t["t"], t["r_norm"], label=label)
    ax[0].plot(tr["t"], tr["phi_e"], "k--", label="phi_e")
    ax[1].plot(tr["t"], tr["phi_r"], "k--", label="phi_r")
    ax[2].plot(tr_sat["t"], tr_sat["tau_norm"], label="|tau|, limit 2.2")
    ax[0].set_ylabel("|e| [rad]")
    ax[1].set_ylabel("|r| [rad/s]")
    ax[2].set_ylabel("[N m]")
    ax[2].set_xlabel("t [s]")
    for a in ax:
        a.legend()
    fig.savefig("closed_loop_tracking.png", dpi=120)
    print("saved closed_loop_tracking.png")
