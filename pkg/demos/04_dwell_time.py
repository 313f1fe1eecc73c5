"""Known-model switching every 1.05 dwell times.

Between entries into the same configuration its Lyapunov value must drop.
This prints those values over five full fold/unfold cycles.
"""
# %%
from morphsim import config, experiment as ex, simulator as sim

cfg = config.load_bundled("case1_dwell")
tau_d = ex.build_scenario(cfg).certificate.tau_d
r = 1.05 * tau_d
cfg.switching.breakpoints = [[k * r, 1 + k % 2] for k in range(11)]
cfg.integration.horizon = 11 * r
log = sim.run(ex.build_scenario(cfg))
print(f"tau_d = {tau_d:.2f} s, residence {r:.2f} s")

# %%
entries = {1: [(0.0, log["V"][0])], 2: []}
for e in log.events:
    entries[e["to"]].append((e["t"], e["V_in"]))
for p, vals in entries.items():
    print(f"configuration {p}:")
    for (t, v), nxt in zip(vals, vals[1:] + [None]):
        drop = f"  ratio to next {nxt[1] / v:.1e}" if nxt else ""
        print(f"  t={t:6.1f}  V={v:.3e}{drop}")
