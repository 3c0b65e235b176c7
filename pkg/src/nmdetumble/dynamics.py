"""Coupled orbit + attitude propagation and sensor synthesis.

The public state carries the body rate, but the integrator works on::

    [r_eci (3, m), v_eci (3, m/s), q (4, scalar-first, body->ECI), h_eci (3, N m s)]

i.e. inertial angular momentum with ``h_dot = torque`` (expressed in ECI) and
``omega = J^-1 C(q) h``.  Runge-Kutta schemes keep linear invariants exactly,
so torque-free momentum is conserved to round-off regardless of step size.

Forces: two-body gravity, J2, and aerodynamic drag from a piecewise
exponential atmosphere co-rotating with the Earth.  Torques: magnetic
(``mu x B``) and flat-plate drag on the six faces of a rectangular prism whose
geometric centre is offset from the centre of mass.

The inner loop is compiled with numba; ``rk4_step`` and friends are the
Python-facing wrappers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .attmath import (
    as_symmetric,
    cross,
    quat_derivative,
    quat_rotate,
    quat_to_dcm,
    random_quat,
    random_unit_vector,
)
from .geomag import EARTH_ROTATION_RATE, FieldModel, GeoEpoch, load_igrf13, sh_field_eci

# WGS-84 / EGM-96 values
GM_EARTH = 3.986004418e14  # m^3/s^2
R_EARTH = 6_378_137.0  # m
J2_EARTH = 1.08262668e-3

# Piecewise-exponential atmosphere (Vallado, "Fundamentals of Astrodynamics
# and Applications", table 8-4): base altitude [km], base density [kg/m^3],
# scale height [km].
ATMOSPHERE_TABLE = np.array(
    [
        [100.0, 5.297e-07, 5.877],
        [110.0, 9.661e-08, 7.263],
        [120.0, 2.438e-08, 9.473],
        [130.0, 8.484e-09, 12.636],
        [140.0, 3.845e-09, 16.149],
        [150.0, 2.070e-09, 22.523],
        [180.0, 5.464e-10, 29.740],
        [200.0, 2.789e-10, 37.105],
        [250.0, 7.248e-11, 45.546],
        [300.0, 2.418e-11, 53.628],
        [350.0, 9.518e-12, 53.298],
        [400.0, 3.725e-12, 58.515],
        [450.0, 1.585e-12, 60.828],
        [500.0, 6.967e-13, 63.822],
        [600.0, 1.454e-13, 71.835],
        [700.0, 3.614e-14, 88.667],
        [800.0, 1.170e-14, 124.64],
        [900.0, 5.245e-15, 181.05],
        [1000.0, 3.019e-15, 268.00],
    ]
)

MIN_ALTITUDE = 100e3


class PropagationError(RuntimeError):
    """Raised when the propagated state leaves its valid domain."""


# Table 1 of the reference spacecraft (1.5U CubeSat)
DEFAULT_INERTIA = np.array(
    [
        [4.5e-3, -3.2e-4, 0.0],
        [-3.2e-4, 5.1e-3, 0.0],
        [0.0, 0.0, 3.7e-3],
    ]
)


@dataclass
class SpacecraftParams:
    """Physical spacecraft and sensor description, SI units throughout.

    ``gyro_noise_density`` is in rad/s/sqrt(Hz); the per-sample standard
    deviation at sample rate ``f`` is ``density * sqrt(f)``.
    """

    inertia: np.ndarray = field(default_factory=lambda: DEFAULT_INERTIA.copy())
    mass: float = 1.6
    dims: np.ndarray = field(default_factory=lambda: np.array([0.75, 0.10, 0.15]))
    drag_coeff: float = 2.2
    mu_max: np.ndarray = field(default_factory=lambda: np.array([0.070, 0.053, 0.070]))
    mag_noise: float = 15e-9
    gyro_noise_density: float = math.radians(0.005)
    gyro_bias: float = math.radians(1.0)
    cp_offset: np.ndarray = field(default_factory=lambda: np.array([0.02, 0.0, 0.0]))

    def __post_init__(self):
        self.inertia = as_symmetric(self.inertia)
        if np.linalg.eigvalsh(self.inertia).min() <= 0:
            raise ValueError("inertia must be positive definite")
        self.dims = np.asarray(self.dims, dtype=float)
        self.mu_max = np.asarray(self.mu_max, dtype=float)
        self.cp_offset = np.asarray(self.cp_offset, dtype=float)
        if np.any(self.mu_max <= 0):
            raise ValueError("mu_max must be positive on every axis")
        if self.mass <= 0 or np.any(self.dims <= 0):
            raise ValueError("mass and dimensions must be positive")
        if self.mag_noise < 0 or self.gyro_noise_density < 0 or self.gyro_bias < 0:
            raise ValueError("sensor noise terms must be non-negative")

    @property
    def inertia_inv(self) -> np.ndarray:
        return np.linalg.inv(self.inertia)

    def facets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Outward normals, areas and centroids (relative to CoM) of the faces."""
        lx, ly, lz = self.dims
        normals = np.vstack([np.eye(3), -np.eye(3)])
        areas = np.array([ly * lz, lx * lz, lx * ly] * 2)
        centroids = normals * (0.5 * np.concatenate([self.dims, self.dims]))[:, None]
        return normals, areas, centroids + self.cp_offset


@dataclass
class SimState:
    t: float
    r_eci: np.ndarray
    v_eci: np.ndarray
    q: np.ndarray
    omega: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.r_eci, self.v_eci, self.q, self.omega]).astype(float)

    @classmethod
    def from_vector(cls, t: float, x) -> SimState:
        x = np.asarray(x, dtype=float)
        return cls(float(t), x[0:3].copy(), x[3:6].copy(), x[6:10].copy(), x[10:13].copy())

    def momentum_body(self, inertia) -> np.ndarray:
        return np.asarray(inertia) @ self.omega

    def momentum_eci(self, inertia) -> np.ndarray:
        return quat_to_dcm(self.q).T @ self.momentum_body(inertia)


@dataclass(frozen=True)
class SensorSample:
    t: float
    B_meas: np.ndarray  # body frame [T]
    omega_meas: np.ndarray  # body frame [rad/s]


@dataclass
class Env:
    """Environment for one run: field model, start epoch and force toggles."""

    field_model: FieldModel = field(default_factory=load_igrf13)
    epoch: GeoEpoch = field(default_factory=lambda: GeoEpoch.from_iso("2024-01-01T00:00:00"))
    j2: bool = True
    drag: bool = True
    drag_torque: bool = True
    gm: float = GM_EARTH
    j2_coeff: float = J2_EARTH
    r_earth: float = R_EARTH
    earth_rate: float = EARTH_ROTATION_RATE
    atmosphere: np.ndarray = field(default_factory=lambda: ATMOSPHERE_TABLE.copy())

    def __post_init__(self):
        # Gauss coefficients are frozen at the start epoch; secular variation
        # over a few hours is far below a nanotesla.
        self._g, self._h = self.field_model.coefficients(self.epoch.decimal_year)
        self._gmst0 = self.epoch.gmst

    def gmst(self, t: float) -> float:
        return self._gmst0 + self.earth_rate * t

    def field_eci(self, r_eci, t: float) -> np.ndarray:
        return sh_field_eci(np.asarray(r_eci, dtype=float), self.gmst(t), self._g, self._h)

    def field_body(self, state: SimState) -> np.ndarray:
        return quat_rotate(state.q, self.field_eci(state.r_eci, state.t))

    def density(self, altitude: float) -> float:
        return _density(altitude, self.atmosphere)


@dataclass(frozen=True)
class _Packed:
    consts: np.ndarray
    inertia: np.ndarray
    inertia_inv: np.ndarray
    normals: np.ndarray
    areas: np.ndarray
    centroids: np.ndarray
    g: np.ndarray
    h: np.ndarray
    atm: np.ndarray


def _pack(params: SpacecraftParams, env: Env) -> _Packed:
    consts = np.array(
        [
            env.gm,
            env.r_earth,
            env.j2_coeff,
            env.earth_rate,
            params.mass,
            params.drag_coeff,
            env._gmst0,
            float(env.j2),
            float(env.drag),
            float(env.drag_torque),
        ]
    )
    normals, areas, centroids = params.facets()
    return _Packed(
        consts,
        params.inertia,
        params.inertia_inv,
        normals,
        areas,
        centroids,
        env._g,
        env._h,
        env.atmosphere,
    )


@njit(cache=True)
def _density(altitude, atm):
    h_km = altitude / 1000.0
    i = 0
    for k in range(atm.shape[0]):
        if h_km >= atm[k, 0]:
            i = k
    return atm[i, 1] * math.exp(-(h_km - atm[i, 0]) / atm[i, 2])


@njit(cache=True)
def _gravity(r, gm, re, j2, use_j2):
    rn = math.sqrt(r[0] ** 2 + r[1] ** 2 + r[2] ** 2)
    a = -gm / rn**3 * r
    if use_j2:
        zr2 = (r[2] / rn) ** 2
        f = -1.5 * j2 * gm * re * re / rn**5
        a[0] += f * r[0] * (1.0 - 5.0 * zr2)
        a[1] += f * r[1] * (1.0 - 5.0 * zr2)
        a[2] += f * r[2] * (3.0 - 5.0 * zr2)
    return a


@njit(cache=True)
def _drag(r, v, q, earth_rate, re, mass, cd, normals, areas, centroids, atm):
    """Drag acceleration (ECI) and drag torque (body)."""
    v_rel = np.empty(3)
    v_rel[0] = v[0] + earth_rate * r[1]
    v_rel[1] = v[1] - earth_rate * r[0]
    v_rel[2] = v[2]
    speed = math.sqrt(v_rel[0] ** 2 + v_rel[1] ** 2 + v_rel[2] ** 2)
    rn = math.sqrt(r[0] ** 2 + r[1] ** 2 + r[2] ** 2)
    rho = _density(rn - re, atm)
    C = quat_to_dcm(q)
    u = C @ v_rel / speed
    qbar = 0.5 * rho * speed * speed
    force = np.zeros(3)
    torque = np.zeros(3)
    for i in range(normals.shape[0]):
        c = normals[i, 0] * u[0] + normals[i, 1] * u[1] + normals[i, 2] * u[2]
        if c > 0.0:
            f = -qbar * cd * areas[i] * c * u
            force += f
            torque += cross(centroids[i], f)
    return C.T @ force / mass, torque


@njit(cache=True)
def _deriv(t, x, mu, consts, inertia, inertia_inv, normals, areas, centroids, g, h, atm):
    gm, re, j2, earth_rate = consts[0], consts[1], consts[2], consts[3]
    mass, cd, gmst0 = consts[4], consts[5], consts[6]
    use_j2, use_drag, use_drag_torque = consts[7] > 0, consts[8] > 0, consts[9] > 0
    r = x[0:3]
    v = x[3:6]
    q = x[6:10]
    C = quat_to_dcm(q)
    w = inertia_inv @ (C @ x[10:13])

    acc = _gravity(r, gm, re, j2, use_j2)
    torque = np.zeros(3)
    if use_drag or use_drag_torque:
        a_drag, t_drag = _drag(r, v, q, earth_rate, re, mass, cd, normals, areas, centroids, atm)
        if use_drag:
            acc += a_drag
        if use_drag_torque:
            torque += t_drag

    if mu[0] != 0.0 or mu[1] != 0.0 or mu[2] != 0.0:
        b_eci = sh_field_eci(r, gmst0 + earth_rate * t, g, h)
        torque += cross(mu, C @ b_eci)

    out = np.empty(13)
    out[0:3] = v
    out[3:6] = acc
    out[6:10] = quat_derivative(q, w)
    out[10:13] = C.T @ torque
    return out


@njit(cache=True)
def _rk4(t, x, dt, n_steps, mu, consts, inertia, inertia_inv, normals, areas, centroids, g, h, atm):
    for _ in range(n_steps):
        k1 = _deriv(t, x, mu, consts, inertia, inertia_inv, normals, areas, centroids, g, h, atm)
        k2 = _deriv(t + 0.5 * dt, x + 0.5 * dt * k1, mu, consts, inertia, inertia_inv, normals, areas, centroids, g, h, atm)
        k3 = _deriv(t + 0.5 * dt, x + 0.5 * dt * k2, mu, consts, inertia, inertia_inv, normals, areas, centroids, g, h, atm)
        k4 = _deriv(t + dt, x + dt * k3, mu, consts, inertia, inertia_inv, normals, areas, centroids, g, h, atm)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        x[6:10] /= math.sqrt(x[6] ** 2 + x[7] ** 2 + x[8] ** 2 + x[9] ** 2)
        t += dt
    return x


class Propagator:
    """RK4 propagator bound to one spacecraft/environment pair."""

    def __init__(self, params: SpacecraftParams, env: Env):
        self.params = params
        self.env = env
        self._p = _pack(params, env)

    def _args(self):
        p = self._p
        return (p.consts, p.inertia, p.inertia_inv, p.normals, p.areas, p.centroids, p.g, p.h, p.atm)

    def to_internal(self, state: SimState) -> np.ndarray:
        x = state.to_vector()
        x[10:13] = state.momentum_eci(self.params.inertia)
        return x

    def from_internal(self, t: float, x: np.ndarray) -> SimState:
        omega = self._p.inertia_inv @ (quat_to_dcm(x[6:10]) @ x[10:13])
        return SimState(float(t), x[0:3].copy(), x[3:6].copy(), x[6:10].copy(), omega)

    def derivative(self, state: SimState, mu) -> np.ndarray:
        """Time derivative of the internal (momentum-form) state vector."""
        return _deriv(state.t, self.to_internal(state), np.asarray(mu, dtype=float), *self._args())

    def propagate_vector(self, t: float, x: np.ndarray, mu, dt: float, n_steps: int) -> np.ndarray:
        if dt <= 0:
            raise ValueError("dt must be positive")
        x_new = _rk4(t, x, dt, n_steps, np.asarray(mu, dtype=float), *self._args())
        if not np.all(np.isfinite(x_new)):
            raise PropagationError(f"non-finite state after t={t + n_steps * dt:.1f} s")
        if np.linalg.norm(x_new[0:3]) - self.env.r_earth < MIN_ALTITUDE:
            raise PropagationError(f"altitude below {MIN_ALTITUDE / 1e3:.0f} km at t={t + n_steps * dt:.1f} s")
        return x_new

    def step(self, state: SimState, mu, dt: float, n_steps: int = 1) -> SimState:
        x = self.propagate_vector(state.t, self.to_internal(state), mu, dt, n_steps)
        return self.from_internal(state.t + n_steps * dt, x)


def _check_altitude(state: SimState, env: Env):
    if np.linalg.norm(state.r_eci) - env.r_earth < MIN_ALTITUDE:
        raise PropagationError("altitude below the 100 km floor")


def orbital_accel(state: SimState, params: SpacecraftParams, env: Env) -> np.ndarray:
    """Translational acceleration [m/s^2]: two-body + J2 + drag."""
    _check_altitude(state, env)
    r = np.asarray(state.r_eci, dtype=float)
    acc = _gravity(r, env.gm, env.r_earth, env.j2_coeff, env.j2)
    if env.drag:
        normals, areas, centroids = params.facets()
        a_drag, _ = _drag(
            r, np.asarray(state.v_eci, dtype=float), np.asarray(state.q, dtype=float),
            env.earth_rate, env.r_earth, params.mass, params.drag_coeff,
            normals, areas, centroids, env.atmosphere,
        )
        acc = acc + a_drag
    return acc


def drag_torque(state: SimState, params: SpacecraftParams, env: Env) -> np.ndarray:
    normals, areas, centroids = params.facets()
    _, torque = _drag(
        np.asarray(state.r_eci, dtype=float), np.asarray(state.v_eci, dtype=float),
        np.asarray(state.q, dtype=float), env.earth_rate, env.r_earth, params.mass,
        params.drag_coeff, normals, areas, centroids, env.atmosphere,
    )
    return torque


def magnetic_torque(mu, b_body) -> np.ndarray:
    """``mu x B`` (equivalently ``-skew(B) @ mu``)."""
    return np.cross(np.asarray(mu, dtype=float), np.asarray(b_body, dtype=float))


def attitude_dynamics(state: SimState, params: SpacecraftParams, mu, b_body, env: Env) -> np.ndarray:
    """Body angular acceleration from Euler's equation with magnetic and drag torque."""
    w = np.asarray(state.omega, dtype=float)
    J = params.inertia
    torque = magnetic_torque(mu, b_body)
    if env.drag_torque:
        torque = torque + drag_torque(state, params, env)
    return np.linalg.solve(J, torque - np.cross(w, J @ w))


def rk4_step(state: SimState, params: SpacecraftParams, env: Env, mu_held, dt: float) -> SimState:
    """One RK4 step of length ``dt`` with the dipole held constant."""
    return Propagator(params, env).step(state, mu_held, dt)


def gyro_sigma(params: SpacecraftParams, sample_rate: float) -> float:
    """Per-sample gyro white-noise standard deviation [rad/s]."""
    return params.gyro_noise_density * math.sqrt(sample_rate)


def draw_gyro_bias(rng: np.random.Generator, params: SpacecraftParams) -> np.ndarray:
    """Constant gyro bias: fixed magnitude, uniformly random direction."""
    return params.gyro_bias * random_unit_vector(rng)


def measure(
    state: SimState,
    params: SpacecraftParams,
    env: Env,
    rng: np.random.Generator,
    bias=None,
    sample_rate: float = 1.0,
    b_body=None,
) -> SensorSample:
    """Noisy magnetometer and gyro readings in the body frame.

    ``bias`` is the run-constant gyro bias (zero if omitted).  ``b_body`` may
    be passed to skip re-evaluating the field.
    """
    if b_body is None:
        b_body = env.field_body(state)
    noise = rng.standard_normal(6)
    b_meas = b_body + params.mag_noise * noise[:3]
    w_meas = state.omega + gyro_sigma(params, sample_rate) * noise[3:]
    if bias is not None:
        w_meas = w_meas + bias
    return SensorSample(state.t, b_meas, w_meas)


def circular_orbit(radius: float, inclination: float, raan: float, arg_lat: float, gm: float = GM_EARTH):
    """ECI position/velocity of a circular orbit (angles in radians)."""
    speed = math.sqrt(gm / radius)
    cu, su = math.cos(arg_lat), math.sin(arg_lat)
    ci, si = math.cos(inclination), math.sin(inclination)
    co, so = math.cos(raan), math.sin(raan)
    p_hat = np.array([co * cu - so * su * ci, so * cu + co * su * ci, su * si])
    q_hat = np.array([-co * su - so * cu * ci, -so * su + co * cu * ci, cu * si])
    return radius * p_hat, speed * q_hat


def sample_initial_state(
    rng: np.random.Generator,
    altitude: float = 400e3,
    inclination_range=(math.radians(20.0), math.radians(160.0)),
    omega_norm: float = math.radians(30.0),
    r_earth: float = R_EARTH,
    gm: float = GM_EARTH,
) -> SimState:
    """Random circular-orbit state with a random tumble of fixed rate."""
    inc = rng.uniform(*inclination_range)
    raan = rng.uniform(0.0, 2 * math.pi)
    arg_lat = rng.uniform(0.0, 2 * math.pi)
    r, v = circular_orbit(r_earth + altitude, inc, raan, arg_lat, gm)
    omega = omega_norm * random_unit_vector(rng)
    q = random_quat(rng)
    return SimState(0.0, r, v, q, omega)


def with_time(state: SimState, t: float) -> SimState:
    return replace(state, t=float(t))
