"""
One detumble, six controllers
=============================

All controllers start from the same random initial state (run 0 of seed 0)
and see the same sensor noise and gyro bias.  The table shows how the
momentum magnitude decays over the two-hour horizon.
"""

import numpy as np

from nmdetumble.harness import DEFAULT_CONTROLLERS, CampaignConfig, EnvConfig, initial_state, run_episode

cfg = CampaignConfig(env=EnvConfig(drag_torque=False))
init = initial_state(cfg, 0)
print(f"initial rate {np.degrees(np.linalg.norm(init.omega)):.1f} deg/s, "
      f"|h0| = {np.linalg.norm(init.momentum_eci(cfg.spacecraft.inertia)):.3e} N m s")

records = {name: run_episode(init, cfg, name, 0) for name in DEFAULT_CONTROLLERS}

# %%
# |h| every 15 minutes, as a fraction of the initial value.
marks = np.arange(0, 7201, 900)
print(f"{'t [min]':>18s}" + "".join(f"{m / 60:9.0f}" for m in marks))
for name, rec in records.items():
    idx = np.searchsorted(rec.t, marks)
    print(f"{name:>18s}" + "".join(f"{rec.h_norm[i] / rec.h_norm[0]:9.1e}" for i in idx))

# %%
# Summary metrics.  Detumble time is the first sample at 1% of |h0|.
for name, rec in records.items():
    td = "-" if rec.detumble_time is None else f"{rec.detumble_time:.0f} s"
    print(f"{name:>18s}  detumble {td:>7s}  final {rec.final_h:.2e} N m s  "
          f"effort {rec.effort:7.1f} A m^2 s  rises {'yes' if rec.momentum_increase else 'no'}")
