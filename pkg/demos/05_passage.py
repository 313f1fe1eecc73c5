"""Flying through a narrow passage: planned versus step command.

The vehicle must fold at the passage entrance.  The minimum-jerk plan takes
at least max(tau_s, tau_d) to get there, so the attitude has settled when it
folds.  A step command arrives sooner with the attitude still moving, and
the scheduler refuses the fold.
"""
# %%
from morphsim import config, experiment as ex
from morphsim.errors import SettlingViolation

res = ex.run_config(config.load_bundled("mjt"))
info = res.info
fold = [e for e in res.log.events if e["to"] == 2][0]
print(f"min-jerk: tau_s={info['tau_s']:.2f} s, tau_d={info['tau_d']:.2f} s, "
      f"arrival {info['t_enter']:.2f} s")
print(f"  fold with |z1|={fold['z1']:.2e} (rho={info['rho']}), schedule {info['signal']}")

# %%
try:
    ex.run_config(config.load_bundled("waypoint"))
except SettlingViolation as exc:
    print(f"waypoint: arrival {exc.info['t_enter']:.2f} s, refused: {exc}")
