"""
The geomagnetic field along a low orbit
=======================================

The controllers only ever see the field in body axes, but its inertial
behaviour is what makes detumbling possible at all: the field direction
turns roughly twice per orbit, so a momentum vector that happens to be
parallel to it will not stay that way.

This walk-through loads the bundled IGRF-13 table, evaluates the field
along a 400 km, 51.6 deg orbit and compares it with its own dipole part.
"""

import numpy as np

from nmdetumble.dynamics import GM_EARTH, R_EARTH, circular_orbit
from nmdetumble.geomag import GeoEpoch, field_eci, load_igrf13

model = load_igrf13()  # truncated to degree 10 by default
dipole = model.dipole()
epoch = GeoEpoch.from_iso("2024-01-01T00:00:00")
print(f"IGRF epochs {model.epochs[0]:.0f}..{model.epochs[-1]:.0f}, degree {model.max_degree}")
print(f"decimal year {epoch.decimal_year:.4f}, GMST {np.degrees(epoch.gmst):.3f} deg")

a = R_EARTH + 400e3
period = 2 * np.pi * np.sqrt(a**3 / GM_EARTH)
inc = np.radians(51.6)

# %%
# Sample one orbit every 60 s.  The orbit is Keplerian here, so the
# position is just the circular-orbit formula at the advancing latitude
# argument; the Earth turns underneath through the epoch offset.
times = np.arange(0.0, period, 60.0)
fields, dip_fields = [], []
for t in times:
    r, _ = circular_orbit(a, inc, 0.0, 2 * np.pi * t / period)
    fields.append(field_eci(model, r, epoch + t))
    dip_fields.append(field_eci(dipole, r, epoch + t))
fields = np.array(fields)
dip_fields = np.array(dip_fields)

mag = np.linalg.norm(fields, axis=1)
print(f"|B| over one orbit: {mag.min() * 1e6:.1f} to {mag.max() * 1e6:.1f} uT")

# %%
# How much does the field direction move?  The angle between successive
# samples integrates to the total swing of the field over an orbit.
unit = fields / mag[:, None]
swing = np.degrees(np.arccos(np.clip(np.sum(unit[1:] * unit[:-1], axis=1), -1, 1)))
print(f"field direction turns {swing.sum():.0f} deg per orbit ({swing.max():.2f} deg/min at most)")

# %%
# The higher-degree terms are a modest correction at this altitude.
err = np.linalg.norm(fields - dip_fields, axis=1) / mag
print(f"dipole-only model differs by {100 * err.mean():.1f}% on average, {100 * err.max():.1f}% at worst")
