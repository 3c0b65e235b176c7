"""IGRF geomagnetic field evaluation.

Coefficients are read from the standard IGRF text table (``g/h n m``
columns followed by one column per model epoch and a final secular-variation
column).  The field is computed in geocentric spherical coordinates with
Schmidt semi-normalised associated Legendre functions and returned in
Cartesian ECEF or ECI coordinates, in tesla.

ECEF -> ECI uses a rotation about the z axis by the Greenwich mean sidereal
time (IAU-82 expression, UT1 taken equal to UTC).  Polar motion, precession
and nutation are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from importlib import resources
from pathlib import Path

import numpy as np
from numba import njit

# IGRF reference radius [m]
IGRF_RADIUS = 6_371_200.0
EARTH_ROTATION_RATE = 7.2921158553e-5  # rad/s
DEFAULT_MAX_DEGREE = 10
# evaluation floor: the WGS-84 polar radius, i.e. nothing below the surface
MIN_RADIUS = 6_356_752.0

J2000 = datetime(2000, 1, 1, 12, 0, 0, tzinfo=timezone.utc)


class IGRFParseError(ValueError):
    pass


class InvalidModelError(ValueError):
    pass


class BelowSurfaceError(ValueError):
    pass


@dataclass(frozen=True)
class GeoEpoch:
    """A UTC instant stored as seconds since J2000 (2000-01-01T12:00:00 UTC).

    Leap seconds are ignored, so this is effectively UT1 for GMST purposes.
    """

    seconds: float

    @classmethod
    def from_datetime(cls, when: datetime) -> GeoEpoch:
        if when.tzinfo is None:
            when = when.replace(tzinfo=timezone.utc)
        return cls((when - J2000).total_seconds())

    @classmethod
    def from_iso(cls, text: str) -> GeoEpoch:
        return cls.from_datetime(datetime.fromisoformat(text.replace("Z", "+00:00")))

    def __add__(self, dt: float) -> GeoEpoch:
        return GeoEpoch(self.seconds + float(dt))

    def to_datetime(self) -> datetime:
        return J2000 + timedelta(seconds=self.seconds)

    @property
    def decimal_year(self) -> float:
        when = self.to_datetime()
        start = datetime(when.year, 1, 1, tzinfo=timezone.utc)
        end = datetime(when.year + 1, 1, 1, tzinfo=timezone.utc)
        return when.year + (when - start).total_seconds() / (end - start).total_seconds()

    @property
    def gmst(self) -> float:
        """Greenwich mean sidereal angle [rad] (IAU-82)."""
        t_cent = self.seconds / (86400.0 * 36525.0)
        gmst_s = (
            67310.54841
            + (876600.0 * 3600.0 + 8640184.812866) * t_cent
            + 0.093104 * t_cent**2
            - 6.2e-6 * t_cent**3
        )
        return math.radians((gmst_s % 86400.0) / 240.0)


@dataclass(frozen=True)
class FieldModel:
    """Gauss coefficients (nT) tabulated at model epochs.

    ``g[k, n, m]`` and ``h[k, n, m]`` hold the coefficients for
    ``epochs[k]``; ``g_sv``/``h_sv`` are the rates (nT/yr) used past the last
    epoch.
    """

    epochs: np.ndarray
    g: np.ndarray
    h: np.ndarray
    g_sv: np.ndarray
    h_sv: np.ndarray
    name: str = "IGRF"
    max_degree: int = field(init=False)

    def __post_init__(self):
        n = self.g.shape[1] - 1
        if n < 1:
            raise InvalidModelError("model needs at least degree 1")
        for arr in (self.g, self.h, self.g_sv, self.h_sv):
            if not np.all(np.isfinite(arr)):
                raise InvalidModelError("non-finite coefficient")
        object.__setattr__(self, "max_degree", n)

    @property
    def is_dipole(self) -> bool:
        return self.max_degree == 1

    def truncated(self, degree: int) -> FieldModel:
        if not 1 <= degree:
            raise InvalidModelError("truncation degree must be >= 1")
        d = min(degree, self.max_degree) + 1
        return FieldModel(
            self.epochs,
            self.g[:, :d, :d].copy(),
            self.h[:, :d, :d].copy(),
            self.g_sv[:d, :d].copy(),
            self.h_sv[:d, :d].copy(),
            name=f"{self.name}-deg{d - 1}",
        )

    def dipole(self) -> FieldModel:
        return self.truncated(1)

    def coefficients(self, decimal_year: float) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients at ``decimal_year``: linear between tabulated epochs,
        secular variation after the last one."""
        ep = self.epochs
        if len(ep) == 1 or decimal_year >= ep[-1]:
            dt = decimal_year - ep[-1]
            return self.g[-1] + dt * self.g_sv, self.h[-1] + dt * self.h_sv
        if decimal_year <= ep[0]:
            return self.g[0].copy(), self.h[0].copy()
        k = int(np.searchsorted(ep, decimal_year, side="right")) - 1
        w = (decimal_year - ep[k]) / (ep[k + 1] - ep[k])
        return (
            (1 - w) * self.g[k] + w * self.g[k + 1],
            (1 - w) * self.h[k] + w * self.h[k + 1],
        )


def dipole_model(g10: float, g11: float = 0.0, h11: float = 0.0) -> FieldModel:
    """Static degree-1 model from explicit coefficients (nT)."""
    g = np.zeros((1, 2, 2))
    h = np.zeros((1, 2, 2))
    g[0, 1, 0], g[0, 1, 1], h[0, 1, 1] = g10, g11, h11
    return FieldModel(np.array([2000.0]), g, h, np.zeros((2, 2)), np.zeros((2, 2)), name="dipole")


def load_coefficients(text: str, max_degree: int | None = None) -> FieldModel:
    """Parse an IGRF coefficient table.

    Missing trailing degrees are allowed (the model is truncated at the
    highest degree present); degree 1 must be complete.
    """
    header = None
    rows: list[tuple[str, int, int, list[float]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if tokens[0] == "g/h":
            header = tokens[3:]
            continue
        if tokens[0] not in ("g", "h"):
            if header is None:
                continue  # preamble lines ("c/s deg ord ...")
            raise IGRFParseError(f"line {lineno}: expected 'g' or 'h' row, got {tokens[0]!r}")
        if header is None:
            raise IGRFParseError(f"line {lineno}: coefficient row before 'g/h n m' header")
        try:
            n, m = int(tokens[1]), int(tokens[2])
            values = [float(t) for t in tokens[3:]]
        except (ValueError, IndexError) as exc:
            raise IGRFParseError(f"line {lineno}: {exc}") from None
        if len(values) != len(header) or n < 1 or not 0 <= m <= n:
            raise IGRFParseError(f"line {lineno}: malformed row")
        if tokens[0] == "h" and m == 0:
            raise IGRFParseError(f"line {lineno}: h coefficient with m=0")
        rows.append((tokens[0], n, m, values))

    if header is None or not rows:
        raise IGRFParseError("no coefficient rows found")

    # last header column is the SV column ("2020-25"); the rest are epochs
    epochs = np.array([float(t) for t in header[:-1]])
    n_max = max(r[1] for r in rows)
    if max_degree is not None:
        n_max = min(n_max, max_degree)
    g = np.zeros((len(epochs), n_max + 1, n_max + 1))
    h = np.zeros_like(g)
    g_sv = np.zeros((n_max + 1, n_max + 1))
    h_sv = np.zeros_like(g_sv)
    seen = set()
    for kind, n, m, values in rows:
        if n > n_max:
            continue
        seen.add((kind, n, m))
        target, rate = (g, g_sv) if kind == "g" else (h, h_sv)
        target[:, n, m] = values[:-1]
        rate[n, m] = values[-1]
    if not {("g", 1, 0), ("g", 1, 1), ("h", 1, 1)} <= seen:
        raise InvalidModelError("degree-1 coefficients missing")
    return FieldModel(epochs, g, h, g_sv, h_sv)


def load_igrf13(max_degree: int | None = DEFAULT_MAX_DEGREE) -> FieldModel:
    """The bundled IGRF-13 table, truncated to ``max_degree``."""
    text = resources.files("nmdetumble").joinpath("data/igrf13coeffs.txt").read_text()
    return load_coefficients(text, max_degree=max_degree)


def load_coefficient_file(path: str | Path, max_degree: int | None = None) -> FieldModel:
    return load_coefficients(Path(path).read_text(), max_degree=max_degree)


@njit(cache=True)
def sh_field_spherical(r, theta, phi, g, h):
    """Field components (Br, Btheta, Bphi) in nT.

    ``r`` in metres, ``theta`` colatitude and ``phi`` east longitude in
    radians; ``g``/``h`` are (N+1, N+1) Schmidt semi-normalised Gauss
    coefficients.
    """
    nmax = g.shape[0] - 1
    ct = math.cos(theta)
    st = math.sin(theta)
    # keep the 1/sin(theta) term finite exactly at the poles
    st_safe = st if abs(st) > 1e-12 else 1e-12

    P = np.zeros((nmax + 1, nmax + 1))
    dP = np.zeros((nmax + 1, nmax + 1))
    P[0, 0] = 1.0
    for n in range(1, nmax + 1):
        if n == 1:
            P[1, 1] = st
            dP[1, 1] = ct
        else:
            f = math.sqrt((2.0 * n - 1.0) / (2.0 * n))
            P[n, n] = f * st * P[n - 1, n - 1]
            dP[n, n] = f * (ct * P[n - 1, n - 1] + st * dP[n - 1, n - 1])
        for m in range(n):
            a = math.sqrt(float(n * n - m * m))
            b = math.sqrt(float((n - 1) * (n - 1) - m * m)) if n - 1 >= m else 0.0
            p2 = P[n - 2, m] if n >= 2 else 0.0
            dp2 = dP[n - 2, m] if n >= 2 else 0.0
            P[n, m] = ((2.0 * n - 1.0) * ct * P[n - 1, m] - b * p2) / a
            dP[n, m] = ((2.0 * n - 1.0) * (ct * dP[n - 1, m] - st * P[n - 1, m]) - b * dp2) / a

    ratio = IGRF_RADIUS / r
    br = 0.0
    bt = 0.0
    bp = 0.0
    rn = ratio * ratio
    for n in range(1, nmax + 1):
        rn *= ratio  # (a/r)^(n+2)
        for m in range(n + 1):
            cm = math.cos(m * phi)
            sm = math.sin(m * phi)
            gh = g[n, m] * cm + h[n, m] * sm
            br += (n + 1) * rn * gh * P[n, m]
            bt -= rn * gh * dP[n, m]
            bp -= rn * m * (-g[n, m] * sm + h[n, m] * cm) * P[n, m] / st_safe
    return br, bt, bp


@njit(cache=True)
def sh_field_ecef(r_ecef, g, h):
    """Cartesian ECEF field [T] at ECEF position ``r_ecef`` [m]."""
    x, y, z = r_ecef[0], r_ecef[1], r_ecef[2]
    r = math.sqrt(x * x + y * y + z * z)
    theta = math.acos(min(1.0, max(-1.0, z / r)))
    phi = math.atan2(y, x)
    br, bt, bp = sh_field_spherical(r, theta, phi, g, h)
    st, ct = math.sin(theta), math.cos(theta)
    sp, cp = math.sin(phi), math.cos(phi)
    out = np.empty(3)
    out[0] = (br * st * cp + bt * ct * cp - bp * sp) * 1e-9
    out[1] = (br * st * sp + bt * ct * sp + bp * cp) * 1e-9
    out[2] = (br * ct - bt * st) * 1e-9
    return out


@njit(cache=True)
def sh_field_eci(r_eci, gmst, g, h):
    """ECI field [T] given the Greenwich sidereal angle ``gmst`` [rad]."""
    c, s = math.cos(gmst), math.sin(gmst)
    r_ecef = np.empty(3)
    r_ecef[0] = c * r_eci[0] + s * r_eci[1]
    r_ecef[1] = -s * r_eci[0] + c * r_eci[1]
    r_ecef[2] = r_eci[2]
    b = sh_field_ecef(r_ecef, g, h)
    out = np.empty(3)
    out[0] = c * b[0] - s * b[1]
    out[1] = s * b[0] + c * b[1]
    out[2] = b[2]
    return out


def _check_radius(r):
    radius = float(np.linalg.norm(r))
    if not radius >= MIN_RADIUS:
        raise BelowSurfaceError(f"radius {radius:.1f} m is below the Earth's surface")


def field_ecef(model: FieldModel, r_ecef, t: GeoEpoch) -> np.ndarray:
    r_ecef = np.asarray(r_ecef, dtype=float)
    _check_radius(r_ecef)
    g, h = model.coefficients(t.decimal_year)
    return sh_field_ecef(r_ecef, g, h)


def field_eci(model: FieldModel, r_eci, t: GeoEpoch) -> np.ndarray:
    """Geomagnetic field [T] in ECI coordinates at ``r_eci`` [m]."""
    r_eci = np.asarray(r_eci, dtype=float)
    _check_radius(r_eci)
    g, h = model.coefficients(t.decimal_year)
    return sh_field_eci(r_eci, t.gmst, g, h)


def field_body(model: FieldModel, state, epoch: GeoEpoch) -> np.ndarray:
    """Field in body coordinates for a :class:`~nmdetumble.dynamics.SimState`.

    ``epoch`` is the simulation start; ``state.t`` is added to it.
    """
    from .attmath import quat_rotate

    b = field_eci(model, state.r_eci, epoch + state.t)
    return quat_rotate(np.asarray(state.q, dtype=float), b)


def field_geocentric(model: FieldModel, radius: float, lat: float, lon: float, decimal_year: float) -> np.ndarray:
    """North, east and down field components [nT] at a geocentric point.

    ``radius`` in metres, geocentric latitude and east longitude in degrees.
    """
    if not radius >= MIN_RADIUS:
        raise BelowSurfaceError(f"radius {radius:.1f} m is below the Earth's surface")
    g, h = model.coefficients(decimal_year)
    br, bt, bp = sh_field_spherical(radius, math.radians(90.0 - lat), math.radians(lon), g, h)
    return np.array([-bt, bp, -br])


FIELD_POINT_COLUMNS = ("radius_km", "lat_deg", "lon_deg", "year", "B_north_nT", "B_east_nT", "B_down_nT")


def read_field_points(path) -> np.ndarray:
    """Reference points from a CSV with :data:`FIELD_POINT_COLUMNS` headers.

    Coordinates are geocentric; columns may appear in any order.
    """
    import csv

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(FIELD_POINT_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing column(s) {', '.join(sorted(missing))}")
        rows = [[float(row[c]) for c in FIELD_POINT_COLUMNS] for row in reader]
    return np.array(rows, dtype=float).reshape(-1, len(FIELD_POINT_COLUMNS))


def validate_points(model: FieldModel, points) -> np.ndarray:
    """Per-point component errors (model minus reference) [nT], shape (n, 3)."""
    points = np.asarray(points, dtype=float).reshape(-1, len(FIELD_POINT_COLUMNS))
    errors = np.empty((len(points), 3))
    for i, (r_km, lat, lon, year, *ref) in enumerate(points):
        errors[i] = field_geocentric(model, r_km * 1e3, lat, lon, year) - np.asarray(ref)
    return errors
