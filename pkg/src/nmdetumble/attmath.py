"""Small fixed-size vector, matrix and quaternion helpers.

Quaternions are scalar-first, ``q = [w, x, y, z]``, and describe the body
attitude relative to ECI (Hamilton product, body-to-ECI active rotation).
``quat_rotate(q, v)`` therefore maps an ECI-frame vector into body
coordinates::

    v_body = conj(q) * v_eci * q

and the kinematics are ``q_dot = 0.5 * q * [0, omega_body]``.

All quantities are SI.
"""

from __future__ import annotations

import numpy as np
from numba import njit

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


@njit(cache=True)
def skew(v):
    """Cross-product matrix, ``skew(v) @ w == cross(v, w)``."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


@njit(cache=True)
def cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def quat_mul(p, q):
    """Hamilton product ``p * q``."""
    out = np.empty(4)
    out[0] = p[0] * q[0] - p[1] * q[1] - p[2] * q[2] - p[3] * q[3]
    out[1] = p[0] * q[1] + p[1] * q[0] + p[2] * q[3] - p[3] * q[2]
    out[2] = p[0] * q[2] - p[1] * q[3] + p[2] * q[0] + p[3] * q[1]
    out[3] = p[0] * q[3] + p[1] * q[2] - p[2] * q[1] + p[3] * q[0]
    return out


@njit(cache=True)
def quat_to_dcm(q):
    """Matrix ``C`` with ``v_body = C @ v_eci``."""
    w, x, y, z = q[0], q[1], q[2], q[3]
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y + w * z), 2 * (x * z - w * y)],
            [2 * (x * y - w * z), 1 - 2 * (x * x + z * z), 2 * (y * z + w * x)],
            [2 * (x * z + w * y), 2 * (y * z - w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@njit(cache=True)
def quat_rotate(q, v):
    """Express the ECI vector ``v`` in the body frame described by ``q``."""
    return quat_to_dcm(q) @ v


@njit(cache=True)
def quat_derivative(q, omega):
    """``0.5 * q * [0, omega]`` with ``omega`` in body coordinates (rad/s)."""
    w, x, y, z = q[0], q[1], q[2], q[3]
    ox, oy, oz = omega[0], omega[1], omega[2]
    out = np.empty(4)
    out[0] = 0.5 * (-x * ox - y * oy - z * oz)
    out[1] = 0.5 * (w * ox + y * oz - z * oy)
    out[2] = 0.5 * (w * oy - x * oz + z * ox)
    out[3] = 0.5 * (w * oz + x * oy - y * ox)
    return out


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q)


def quat_conj(q):
    q = np.asarray(q, dtype=float)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    s = np.sin(0.5 * angle)
    return np.array([np.cos(0.5 * angle), *(s * axis)])


def random_quat(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed unit quaternion (Shoemake's method)."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    return np.array(
        [
            b * np.cos(2 * np.pi * u3),
            a * np.sin(2 * np.pi * u2),
            a * np.cos(2 * np.pi * u2),
            b * np.sin(2 * np.pi * u3),
        ]
    )


def random_unit_vector(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def as_symmetric(m, tol: float = 1e-12) -> np.ndarray:
    """Return ``m`` as a float 3x3 array, checking it is symmetric."""
    m = np.array(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    if np.max(np.abs(m - m.T)) >= tol:
        raise ValueError("matrix is not symmetric")
    return m
