"""
Gain sensitivity
================

Sweep the primary gain of two controllers over several decades on one
initial condition.  B-cross has a sweet spot: too much gain and the
command saturates into something close to bang-bang, which stalls near
the field-aligned states.  The non-monotonic law is flat from its
reference gain upwards, because the tanh saturation caps the command.
Far below the reference gain the tanh stays in its linear range, the
dipole is only a few percent of the limit and two hours is not enough.
"""

import numpy as np

from nmdetumble.controllers import ControllerConfig
from nmdetumble.harness import CampaignConfig, EnvConfig, run_gain_sweep

cfg = CampaignConfig(env=EnvConfig(drag_torque=False))

for name, decades in (("nonmonotonic", np.logspace(-2, 3, 6)), ("bcross", np.logspace(-2, 3, 6))):
    k0 = ControllerConfig(name).gain
    records = run_gain_sweep(cfg, name, k0 * decades, run_index=0)
    print(f"\n{name} (reference gain {k0:g})")
    print(f"{'gain':>10s} {'final |h|/|h0|':>15s} {'detumble [s]':>13s}")
    for rec in records:
        td = "-" if rec.detumble_time is None else f"{rec.detumble_time:.0f}"
        print(f"{rec.gain:10.3g} {rec.final_h / rec.h_norm[0]:15.2e} {td:>13s}")
