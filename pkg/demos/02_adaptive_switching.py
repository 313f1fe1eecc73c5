"""Adaptive attitude tracking through two configuration switches.

The vehicle tracks a sinusoidal body-rate reference with inertia estimates
starting at the nominal (wrong) values.  It folds at 30 s and unfolds at
60 s; each configuration keeps its own estimate, which resumes where it
stopped.  Pass a file name to save the figure.
"""
# %%
import sys

import matplotlib.pyplot as plt
import numpy as np

from morphsim import config, experiment as ex, simulator as sim

cfg = config.load_bundled("fig3")
sc = ex.build_scenario(cfg)
log = sim.run(sc)  # about a minute and a half of compute

# %% switch report
for e in log.events:
    extra = f", re-entry condition {'met' if e.get('condition_ok') else 'not met'}" if e["reentry"] else ""
    bound = f" <= {e['jump_bound']:.2e}" if "jump_bound" in e else ""
    print(f"t={e['t']:5.1f} s  {e['from']} -> {e['to']}  |z1|={e['z1']:.2e}  "
          f"jump {e['jump']:.2e}{bound}{extra}")
print(f"final |e_R|={np.linalg.norm(log.e_R[-1]):.1e}, |e_Omega|={np.linalg.norm(log.e_Omega[-1]):.1e}")
print(f"worst monitor excess {log.summary['max_monitor_excess']:.1e}, "
      f"smallest eig P(h_hat) {log.summary['min_P_eig']:.1e}")

# %% figure
t = log.t
fig, ax = plt.subplots(4, 1, sharex=True, figsize=(8, 10))
for k, c in zip("xyz", "rgb"):
    ax[0].plot(t, log[f"Omega_{k}"], c, lw=0.8)
    ax[0].plot(t, log[f"Omegad_{k}"], c + "--", lw=0.8)
    ax[1].plot(t, log[f"eR_{k}"], c, lw=0.8)
    ax[3].plot(t, log[f"u_{k}"], c, lw=0.8)
for n in ("xx", "yy", "zz", "xy", "xz", "yz"):
    ax[2].plot(t, log[f"hhat_{n}"], lw=0.8, label=n)
ax[2].legend(ncol=6, fontsize=7)
# the large adaptation gain gives a short burst near t = 1 s
ax[2].set_yscale("symlog", linthresh=1e-2)
ax[3].set_yscale("symlog", linthresh=1e-3)
for a, title in zip(ax, ("body rate vs reference", "e_R", "inertia estimates", "torque")):
    a.set_title(title, loc="left", fontsize=9)
    for ts in sc.signal.switch_times():
        a.axvline(ts, color="k", lw=0.5, ls=":")
ax[-1].set_xlabel("t [s]")
fig.tight_layout()
fig.savefig(sys.argv[1]) if len(sys.argv) > 1 else plt.show()
