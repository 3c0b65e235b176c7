"""
Why a non-monotonic certificate helps
=====================================

Every magnetic torque is perpendicular to the field, so when the
momentum vector lines up with the field the classic laws have nothing to
push against and command zero.  The non-monotonic law looks one prediction
horizon ahead: if the field is about to turn, it starts working now, even
if that costs a little momentum in the first step.
"""

import numpy as np

from nmdetumble.controllers import (
    ControllerConfig,
    appendix_terms,
    ctrl_bang_bang,
    ctrl_lyapunov_momentum,
    ctrl_nonmonotonic,
    ctrl_projection,
    eval_delta_v,
    field_estimate,
    regularized_command,
)
from nmdetumble.dynamics import SensorSample

MU_MAX = np.array([0.070, 0.053, 0.070])
J = np.diag([4.5e-3, 5.1e-3, 3.7e-3])

# %%
# Put the momentum exactly along the field.
B = np.array([3e-5, 0.0, 0.0])
h = np.array([1e-3, 0.0, 0.0])
omega = np.linalg.solve(J, h)
print("bang-bang:         ", ctrl_bang_bang(h, B, MU_MAX))
print("Lyapunov momentum: ", ctrl_lyapunov_momentum(h, B / np.linalg.norm(B), 2e3, MU_MAX))
print("projection:        ", ctrl_projection(h, B, 0.05, 4.0, 1e-8, MU_MAX))

# %%
# Now let the inertial field turn towards +y at about orbital rate.  The
# body-frame derivative includes the body's own rotation.
bdot_inertial = np.array([0.0, 3e-8, 0.0])
sample = SensorSample(0.0, B, omega)
est = field_estimate(sample, bdot_inertial - np.cross(omega, B), dt_pred=600.0)
print("predicted field in 600 s:", est.B_next)
mu = ctrl_nonmonotonic(sample, est, J, ControllerConfig("nonmonotonic"))
print("nonmonotonic:      ", mu)

# %%
# The two-step condition behind it.  With the dt-carrying form and the
# closed-form minimiser, the combined decrease alpha (V2 - V0) + (V1 - V0)
# is negative even though the first step on its own raises V.
terms = appendix_terms(B, est.B_next, h, 600.0)
mbar = regularized_command(terms, alpha=100.0, beta=1e-6)
print(f"dV (two steps) = {eval_delta_v(terms, mbar, 100.0):.3e}")
h1 = h + 600.0 * np.cross(mbar[:3], B)
h2 = h1 + 600.0 * np.cross(mbar[3:], est.B_next)
print(f"V0, V1, V2 = {h @ h / 2:.3e}, {h1 @ h1 / 2:.3e}, {h2 @ h2 / 2:.3e}")
