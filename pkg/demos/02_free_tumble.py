"""
A free tumble
=============

Before any control, check the plant.  With drag and the magnetorquers off
the inertial angular momentum of the spacecraft is a constant of motion and
its orbit energy is conserved; both make good canaries for the integrator.
We also watch a torque-free body drift between its principal axes.
"""

import numpy as np

from nmdetumble.attmath import random_quat
from nmdetumble.dynamics import GM_EARTH, R_EARTH, Env, Propagator, SimState, SpacecraftParams, circular_orbit

params = SpacecraftParams()  # the 1U reference spacecraft
env = Env(j2=False, drag=False, drag_torque=False)
prop = Propagator(params, env)

r, v = circular_orbit(R_EARTH + 400e3, np.radians(51.6), 0.4, 0.0)
start = SimState(0.0, r, v, random_quat(np.random.default_rng(0)), np.radians([17.0, -17.0, 17.0]))
print("inertia [kg m^2]:\n", params.inertia)

# %%
# Propagate one orbit at the harness step of 0.5 s, sampling every ten
# minutes.  The integrator carries the inertial momentum directly, so its
# magnitude is preserved to rounding.
h0 = start.momentum_eci(params.inertia)
x = prop.to_internal(start)
t = 0.0
print(f"{'t [s]':>7s} {'|h| [N m s]':>12s} {'|w| [deg/s]':>12s} {'w_z share':>10s}")
for _ in range(10):
    state = prop.from_internal(t, x)
    w = state.omega
    print(f"{t:7.0f} {np.linalg.norm(state.momentum_eci(params.inertia)):12.6e} "
          f"{np.degrees(np.linalg.norm(w)):12.4f} {w[2] ** 2 / (w @ w):10.3f}")
    x = prop.propagate_vector(t, x, np.zeros(3), 0.5, 1200)
    t += 600.0


def energy(xv):
    return 0.5 * xv[3:6] @ xv[3:6] - GM_EARTH / np.linalg.norm(xv[:3])


end = prop.from_internal(t, x)
print(f"relative |h| change: {abs(np.linalg.norm(end.momentum_eci(params.inertia)) / np.linalg.norm(h0) - 1):.1e}")
print(f"relative energy change: {abs(energy(x) / energy(prop.to_internal(start)) - 1):.1e}")
