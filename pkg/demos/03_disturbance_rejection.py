"""Robust-adaptive tracking under a bounded torque disturbance.

The torque 0.1 [0, sin t, cos t] N m acts throughout while the reference
rate sweeps from 0.2 to 1 rad/s and the vehicle folds at 30 s and unfolds
at 60 s.  The rejection term keeps
e_A . (Delta + mu) below the boundary value eta, and |z1| settles into a
small ball.
"""
# %%
import sys

import matplotlib.pyplot as plt
import numpy as np

from morphsim import config, experiment as ex, simulator as sim

sc = ex.build_scenario(config.load_bundled("fig5_disturbance"))
log = sim.run(sc)

# %%
t = log.t
e_A = log.block("eA")
mu = log.block("u_mu")
D = np.array([sc.disturbance(tt) for tt in t])
margin = np.einsum("ni,ni->n", e_A, D + mu) - log["eta"]
z1 = log.z1_norm
print(f"max e_A.(Delta+mu) - eta = {margin.max():.2e}")
print(f"|z1| first reaches 0.05 at t = {t[np.argmax(z1 <= 0.05)]:.1f} s; max after 45 s {z1[t >= 45].max():.3f}")

# %%
fig, ax = plt.subplots(3, 1, sharex=True, figsize=(8, 8))
ax[0].semilogy(t, z1, lw=0.8)
ax[0].axhline(0.05, color="k", ls=":")
ax[0].set_title("|z1|", loc="left", fontsize=9)
ax[1].plot(t, D, lw=0.8)
ax[1].plot(t, -mu, "--", lw=0.8)
ax[1].set_title("disturbance (solid) and -mu (dashed)", loc="left", fontsize=9)
ax[2].plot(t, margin, lw=0.8)
ax[2].set_title("e_A.(Delta+mu) - eta", loc="left", fontsize=9)
ax[-1].set_xlabel("t [s]")
fig.tight_layout()
fig.savefig(sys.argv[1]) if len(sys.argv) > 1 else plt.show()
