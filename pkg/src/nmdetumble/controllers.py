"""Magnetorquer detumbling control laws.

Every law here is a pure function returning a body-frame dipole [A m^2]
that respects the per-axis limit ``mu_max``.  They are deliberately
unit-agnostic: each acts on whatever field/momentum scaling it is handed.
The closed-loop adapter :class:`DetumbleController` decides that scaling
(see :data:`FIELD_SCALING`) so the reference gains are meaningful.

Non-monotonic controller
------------------------
With ``V = h'h / 2`` and the Euler model ``h1 = h0 + dt (mu0 x B0)``,
``h2 = h1 + dt (mu1 x B1)``, the two-step condition

    dV = alpha (V2 - V0) + (V1 - V0)

is a convex quadratic in the stacked dipole ``mbar = [mu0; mu1]``.  The flight
form (``build_nm_terms`` / ``solve_nm``) works with unit field directions and
folds ``dt`` into the output gain; ``appendix_terms``/``eval_delta_v`` keep
the dt-carrying form for checking the decrease property.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .attmath import skew
from .dynamics import SensorSample

CONTROLLER_NAMES = (
    "none",
    "bang_bang",
    "lyapunov_momentum",
    "bcross",
    "bdot",
    "bdot_variant",
    "projection",
    "nonmonotonic",
)

# Field scaling fed to each law by DetumbleController:
#   "raw"        B in tesla (scale-free laws)
#   "unit"       B/|B|, and for B-dot laws Bdot/|B|
#   "inv_square" B/|B|^2 (B-cross: makes k a rate gain in N m s)
FIELD_SCALING = {
    "bang_bang": "raw",
    "lyapunov_momentum": "unit",
    "bcross": "inv_square",
    "bdot": "unit",
    "bdot_variant": "unit",
    "projection": "raw",
    "nonmonotonic": "unit",
}


class ControllerError(ValueError):
    pass


def clamp(mu, mu_max) -> np.ndarray:
    mu_max = np.asarray(mu_max, dtype=float)
    return np.clip(mu, -mu_max, mu_max)


# --------------------------------------------------------------------------
# field derivative and prediction


class BdotEstimator:
    """First-difference magnetometer derivative with exponential smoothing.

    ``lowpass_alpha = 1`` returns the raw difference.
    """

    def __init__(self, lowpass_alpha: float = 0.5):
        if not 0.0 < lowpass_alpha <= 1.0:
            raise ControllerError("lowpass_alpha must be in (0, 1]")
        self.alpha = lowpass_alpha
        self.prev: SensorSample | None = None
        self.value: np.ndarray | None = None

    def update(self, sample: SensorSample) -> np.ndarray | None:
        if self.prev is None:
            self.prev = sample
            return None
        raw = estimate_bdot(self.prev, sample, 1.0)
        self.value = raw if self.value is None else self.alpha * raw + (1 - self.alpha) * self.value
        self.prev = sample
        return self.value


def body_rotation(omega, dt: float) -> np.ndarray:
    """Matrix taking body coordinates at ``t`` to body coordinates at
    ``t + dt`` for a constant body rate ``omega``: ``expm(-skew(omega) dt)``."""
    omega = np.asarray(omega, dtype=float)
    angle = np.linalg.norm(omega) * dt
    if angle < 1e-12:
        return np.eye(3) - skew(omega) * dt
    K = skew(omega / np.linalg.norm(omega))
    return np.eye(3) - np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


def estimate_bdot(prev: SensorSample, cur: SensorSample, lowpass_alpha: float = 1.0, previous_estimate=None):
    """Finite-difference body-frame field rate [T/s].

    With ``previous_estimate`` given, the difference is blended as
    ``alpha * diff + (1 - alpha) * previous_estimate``.
    """
    dt = cur.t - prev.t
    if dt <= 0:
        raise ControllerError("samples must be strictly increasing in time")
    diff = (np.asarray(cur.B_meas) - np.asarray(prev.B_meas)) / dt
    if previous_estimate is None or lowpass_alpha == 1.0:
        return diff
    return lowpass_alpha * diff + (1 - lowpass_alpha) * np.asarray(previous_estimate)


def predict_field(sample: SensorSample, bdot_body, dt_pred: float) -> np.ndarray:
    """Linear prediction of the body-frame field ``dt_pred`` seconds ahead.

    Uses the inertial rate ``Bdot_N = omega x B + Bdot_B`` (body coordinates
    at the current time).
    """
    if dt_pred <= 0:
        raise ControllerError("prediction horizon must be positive")
    b = np.asarray(sample.B_meas, dtype=float)
    bdot_inertial = np.cross(sample.omega_meas, b) + np.asarray(bdot_body, dtype=float)
    return b + dt_pred * bdot_inertial


# --------------------------------------------------------------------------
# baseline laws


def ctrl_bang_bang(h, B, mu_max) -> np.ndarray:
    """``mu_max * sign(h x B)``, the minimiser of ``-h' skew(B) mu`` over the box."""
    return np.asarray(mu_max, dtype=float) * np.sign(np.cross(h, B))


def ctrl_lyapunov_momentum(h, B, k: float, mu_max) -> np.ndarray:
    """Soft-saturated bang-bang: ``mu_max * tanh(k (h x B))``."""
    if k <= 0:
        raise ControllerError("gain must be positive")
    return np.asarray(mu_max, dtype=float) * np.tanh(k * np.cross(h, B))


def ctrl_bcross(omega, B, k: float, mu_max) -> np.ndarray:
    if k <= 0:
        raise ControllerError("gain must be positive")
    return clamp(k * np.cross(omega, B), mu_max)


def bcross_gain(semi_major_axis: float, gm: float, geomag_inclination: float, min_inertia: float) -> float:
    """Avanzini-Giulietti B-cross gain ``2 n (1 + sin xi) J_min``."""
    if semi_major_axis <= 0:
        raise ControllerError("semi-major axis must be positive")
    mean_motion = 1.0 / np.sqrt(semi_major_axis**3 / gm)
    return 2.0 * mean_motion * (1.0 + np.sin(geomag_inclination)) * min_inertia


def ctrl_bdot(bdot_body, k: float, mu_max) -> np.ndarray:
    if k <= 0:
        raise ControllerError("gain must be positive")
    return clamp(-k * np.asarray(bdot_body, dtype=float), mu_max)


def ctrl_bdot_variant(B, bdot_body, k: float, eps: float, mu_max) -> np.ndarray:
    """``-k skew(B) (eps I + skew(B))^-1 Bdot``: B-cross with a regularised
    rate reconstructed from the field derivative."""
    if k <= 0 or eps <= 0:
        raise ControllerError("k and eps must be positive")
    Bx = skew(np.asarray(B, dtype=float))
    mu = -k * Bx @ np.linalg.solve(eps * np.eye(3) + Bx, np.asarray(bdot_body, dtype=float))
    if not np.all(np.isfinite(mu)):
        raise ControllerError("non-finite dipole")
    return clamp(mu, mu_max)


def projection_gain(h, B, k1: float, k2: float, eps: float) -> float:
    B = np.asarray(B, dtype=float)
    h = np.asarray(h, dtype=float)
    nb = np.linalg.norm(B)
    return k1 * np.exp(-k2 * abs(B @ h / (nb * (np.linalg.norm(h) + eps))))


def ctrl_projection(h, B, k1: float, k2: float, eps: float, mu_max) -> np.ndarray:
    """Invernizzi-Lovera projection law with alignment-dependent gain."""
    B = np.asarray(B, dtype=float)
    nb2 = B @ B
    if nb2 == 0:
        raise ControllerError("field magnitude is zero")
    k = projection_gain(h, B, k1, k2, eps)
    return clamp(-(k / nb2) * np.cross(B, h), mu_max)


# --------------------------------------------------------------------------
# non-monotonic controller


@dataclass(frozen=True)
class NmTerms:
    """Quadratic-form pieces of the two-step decrease condition.

    ``bbar`` stacks ``skew(b1)'`` over ``skew(b2)'`` (6x3); ``Z`` selects the
    first dipole block.
    """

    bbar: np.ndarray
    Z: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    q1: np.ndarray
    q2: np.ndarray


def stacked_skew(b1, b2) -> np.ndarray:
    return np.vstack([skew(np.asarray(b1, dtype=float)).T, skew(np.asarray(b2, dtype=float)).T])


def build_nm_terms(b1, b2, h, alpha: float, beta: float) -> NmTerms:
    """Terms for the flight controller (unit field directions)."""
    b1 = np.asarray(b1, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    for b in (b1, b2):
        if abs(np.linalg.norm(b) - 1.0) > 1e-9:
            raise ControllerError("field directions must be unit vectors")
    if alpha < 0 or beta <= 0:
        raise ControllerError("need alpha >= 0 and beta > 0")
    bbar = stacked_skew(b1, b2)
    Z = beta * np.diag([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    bb = bbar @ bbar.T
    h = np.asarray(h, dtype=float)
    return NmTerms(
        bbar=bbar,
        Z=Z,
        Q1=Z @ bb @ Z,
        Q2=alpha * bb,
        q1=Z @ bbar @ h,
        q2=alpha * bbar @ h,
    )


def solve_nm(terms: NmTerms) -> np.ndarray:
    """Stacked dipole ``mbar`` solving ``(I + Q1 + Q2) mbar = q1 + q2``."""
    A = np.eye(6) + terms.Q1 + terms.Q2
    return np.linalg.solve(A, terms.q1 + terms.q2)


@dataclass(frozen=True)
class AppendixTerms:
    """dt-carrying terms with ``dV = mbar'(Q1 + alpha Q2)mbar/2 - (q1 + alpha q2)'mbar``.

    ``alpha`` is applied once, in :func:`eval_delta_v` and
    :func:`regularized_command`, not inside ``Q2``/``q2``.
    """

    Bbar: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    dt: float


def appendix_terms(B0, B1, h0, dt: float) -> AppendixTerms:
    if dt <= 0:
        raise ControllerError("dt must be positive")
    Bbar = stacked_skew(B0, B1)
    Z = np.diag([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    bb = Bbar @ Bbar.T
    h0 = np.asarray(h0, dtype=float)
    return AppendixTerms(
        Bbar=Bbar,
        Q1=dt**2 * Z @ bb @ Z,
        Q2=dt**2 * bb,
        q1=dt * Z @ Bbar @ h0,
        q2=dt * Bbar @ h0,
        dt=dt,
    )


def eval_delta_v(terms: AppendixTerms, mbar, alpha: float) -> float:
    mbar = np.asarray(mbar, dtype=float)
    P = terms.Q1 + alpha * terms.Q2
    return 0.5 * mbar @ P @ mbar - (terms.q1 + alpha * terms.q2) @ mbar


def regularized_objective(terms: AppendixTerms, mbar, alpha: float, beta: float) -> float:
    mbar = np.asarray(mbar, dtype=float)
    return 0.5 * beta * mbar @ mbar + eval_delta_v(terms, mbar, alpha)


def regularized_objective_grad(terms: AppendixTerms, mbar, alpha: float, beta: float) -> np.ndarray:
    mbar = np.asarray(mbar, dtype=float)
    return beta * mbar + (terms.Q1 + alpha * terms.Q2) @ mbar - (terms.q1 + alpha * terms.q2)


def regularized_command(terms: AppendixTerms, alpha: float, beta: float) -> np.ndarray:
    """Unconstrained minimiser ``(beta I + Q1 + alpha Q2)^-1 (q1 + alpha q2)``."""
    A = beta * np.eye(6) + terms.Q1 + alpha * terms.Q2
    return np.linalg.solve(A, terms.q1 + alpha * terms.q2)


def box_qp_command(terms: AppendixTerms, alpha: float, beta: float, mu_max, iters: int = 2000) -> np.ndarray:
    """Box-constrained minimiser of the regularised objective.

    Projected gradient with step ``1/L``; the objective is strongly convex so
    this converges linearly.
    """
    lim = np.concatenate([np.asarray(mu_max, dtype=float)] * 2)
    A = beta * np.eye(6) + terms.Q1 + alpha * terms.Q2
    c = terms.q1 + alpha * terms.q2
    step = 1.0 / np.linalg.eigvalsh(A).max()
    x = np.zeros(6)
    for _ in range(iters):
        x = np.clip(x - step * (A @ x - c), -lim, lim)
    return x


@dataclass(frozen=True)
class FieldEstimate:
    B_k: np.ndarray
    bdot_body: np.ndarray
    bdot_inertial: np.ndarray
    B_next: np.ndarray


def field_estimate(sample: SensorSample, bdot_body, dt_pred: float) -> FieldEstimate:
    b = np.asarray(sample.B_meas, dtype=float)
    bdot_body = np.asarray(bdot_body, dtype=float)
    return FieldEstimate(
        B_k=b,
        bdot_body=bdot_body,
        bdot_inertial=np.cross(sample.omega_meas, b) + bdot_body,
        B_next=predict_field(sample, bdot_body, dt_pred),
    )


def nm_dipole(B_k, B_next, h, k: float, alpha: float, beta: float, mu_max) -> np.ndarray:
    """Non-monotonic command from the current and predicted field."""
    n1, n2 = np.linalg.norm(B_k), np.linalg.norm(B_next)
    if n1 == 0 or n2 == 0:
        raise ControllerError("cannot normalise a zero field")
    terms = build_nm_terms(np.asarray(B_k) / n1, np.asarray(B_next) / n2, h, alpha, beta)
    mbar = solve_nm(terms)
    return np.asarray(mu_max, dtype=float) * np.tanh(k * mbar[:3])


def ctrl_nonmonotonic(sample: SensorSample, estimate: FieldEstimate, inertia, cfg: ControllerConfig) -> np.ndarray:
    """Non-monotonic command; returns zeros when the field cannot be normalised."""
    h = np.asarray(inertia) @ np.asarray(sample.omega_meas, dtype=float)
    try:
        return nm_dipole(estimate.B_k, estimate.B_next, h, cfg.k, cfg.alpha, cfg.beta, cfg.mu_max)
    except ControllerError:
        return np.zeros(3)


# --------------------------------------------------------------------------
# configuration and closed-loop adapter

_DEFAULT_GAINS = {
    "none": {},
    "bang_bang": {},
    "lyapunov_momentum": {"k": 2.0e3},
    "bcross": {"k": 4.0e-6},
    "bdot": {"k": 1.0},
    "bdot_variant": {"k": 0.4, "eps": 1e-6},
    "projection": {"k1": 0.05, "k2": 4.0, "eps": 1e-8},
    "nonmonotonic": {"k": 3.0e3, "alpha": 100.0, "beta": 1.0, "dt_pred": 600.0},
}

# name of the gain swept by a gain study
PRIMARY_GAIN = {
    "lyapunov_momentum": "k",
    "bcross": "k",
    "bdot": "k",
    "bdot_variant": "k",
    "projection": "k1",
    "nonmonotonic": "k",
}


@dataclass(frozen=True)
class ControllerConfig:
    """Controller choice and gains; unset gains take the reference defaults."""

    name: str = "nonmonotonic"
    k: float | None = None
    k1: float | None = None
    k2: float | None = None
    eps: float | None = None
    alpha: float | None = None
    beta: float | None = None
    dt_pred: float | None = None
    mu_max: tuple = (0.070, 0.053, 0.070)
    lowpass_alpha: float = 0.5

    def __post_init__(self):
        if self.name not in CONTROLLER_NAMES:
            raise ControllerError(f"unknown controller {self.name!r}")
        for key, value in _DEFAULT_GAINS[self.name].items():
            if getattr(self, key) is None:
                object.__setattr__(self, key, value)
        for key in ("k", "k1", "k2", "eps", "beta", "dt_pred"):
            value = getattr(self, key)
            if value is not None and value <= 0:
                raise ControllerError(f"{key} must be positive")
        if not 0.0 < self.lowpass_alpha <= 1.0:
            raise ControllerError("lowpass_alpha must be in (0, 1]")
        if self.alpha is not None and self.alpha < 0:
            raise ControllerError("alpha must be non-negative")
        object.__setattr__(self, "mu_max", tuple(float(m) for m in self.mu_max))
        if any(m <= 0 for m in self.mu_max):
            raise ControllerError("mu_max must be positive")

    def with_gain(self, value: float) -> ControllerConfig:
        return replace(self, **{PRIMARY_GAIN[self.name]: value})

    @property
    def gain(self) -> float | None:
        key = PRIMARY_GAIN.get(self.name)
        return None if key is None else getattr(self, key)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def propagate_body_vector(omega0, omega1, dt: float, substeps: int = 4, omega_prev=None) -> np.ndarray:
    """Transition matrix for an inertially fixed vector seen from the body.

    The body rate between the samples ``omega0`` (start) and ``omega1`` (end)
    is interpolated linearly, or quadratically when the sample before the
    interval, ``omega_prev``, is also given (equal spacing assumed).  The
    rotation is accumulated from ``substeps`` midpoint rotations.
    """
    omega0 = np.asarray(omega0, dtype=float)
    omega1 = np.asarray(omega1, dtype=float)
    R = np.eye(3)
    h = dt / substeps
    for i in range(substeps):
        s = (i + 0.5) / substeps
        w = (1 - s) * omega0 + s * omega1
        if omega_prev is not None:
            # Lagrange through nodes -1, 0, 1
            w = w + 0.5 * s * (s - 1) * (omega1 - 2 * omega0 + np.asarray(omega_prev))
        R = body_rotation(w, h) @ R
    return R


class RateBiasFilter:
    """Kalman filter for the gyro bias and the inertial field rate.

    The state is ``x = [b, d, e]``: ``b`` the constant gyro bias [rad/s],
    ``d = Bdot_N / |B|`` the inertial field rate in body axes [1/s] and ``e``
    its inertial time derivative [1/s^2], also in body axes.  If
    ``B_k = R B_{k-1} + dt Bdot_N`` with ``R`` built from the true rate, then
    building ``R`` from the bias-corrected measured rate leaves a residual
    ``dt (b_err x B)``, so the normalised one-step residual::

        y = (B_k - R B_{k-1}) / (dt |B_k|) = -skew(B_k/|B_k|) b_err + d

    is linear in the state.  ``b`` is body-fixed while ``d`` and ``e`` turn
    with the body, which separates them once the spacecraft has rotated.
    With ``estimate_bias=False`` the bias is pinned at zero.
    """

    def __init__(
        self,
        mag_noise: float = 15e-9,
        gyro_sigma: float = np.radians(0.005),
        bias_sigma0: float = np.radians(2.0),
        rate_sigma0: float = 5e-3,
        accel_sigma0: float = 1e-5,
        accel_walk: float = 1e-7,
        model_error: float = 0.03,
        estimate_bias: bool = True,
    ):
        self.mag_noise = mag_noise
        self.gyro_sigma = gyro_sigma
        self.accel_walk = accel_walk
        self.model_error = model_error
        self.estimate_bias = estimate_bias
        self.x = np.zeros(9)
        p0 = np.r_[
            np.full(3, bias_sigma0**2 if estimate_bias else 0.0),
            np.full(3, rate_sigma0**2),
            np.full(3, accel_sigma0**2),
        ]
        self.P = np.diag(p0)
        self.prev: SensorSample | None = None
        self.older: SensorSample | None = None
        self.n_updates = 0

    @property
    def bias(self) -> np.ndarray:
        return self.x[:3].copy()

    @property
    def rate(self) -> np.ndarray:
        """Current estimate of ``Bdot_N / |B|`` in body axes [1/s]."""
        return self.x[3:6].copy()

    def update(self, sample: SensorSample) -> np.ndarray:
        """Process one sample and return the bias-corrected body rate."""
        prev, self.prev = self.prev, sample
        older, self.older = self.older, prev
        if prev is None:
            return sample.omega_meas - self.x[:3]
        dt = sample.t - prev.t
        if dt <= 0:
            raise ControllerError("samples must be strictly increasing in time")
        b = self.x[:3]
        omega_prev = None
        if older is not None and abs((prev.t - older.t) - dt) < 1e-9 * dt:
            omega_prev = older.omega_meas - b
        R = propagate_body_vector(prev.omega_meas - b, sample.omega_meas - b, dt, omega_prev=omega_prev)
        F = np.eye(9)
        F[3:6, 3:6] = R
        F[3:6, 6:9] = dt * R
        F[6:9, 6:9] = R
        self.x = F @ self.x
        self.P = F @ self.P @ F.T
        q = self.accel_walk**2 * dt
        self.P[3:6, 3:6] += q * dt**2 / 3 * np.eye(3)
        self.P[3:6, 6:9] += q * dt / 2 * np.eye(3)
        self.P[6:9, 3:6] += q * dt / 2 * np.eye(3)
        self.P[6:9, 6:9] += q * np.eye(3)
        nb = np.linalg.norm(sample.B_meas)
        if nb > 0:
            # R used the current bias estimate, so y sees only the bias error
            y = (sample.B_meas - R @ prev.B_meas) / (dt * nb)
            H = np.zeros((3, 9))
            if self.estimate_bias:
                H[:, :3] = -skew(sample.B_meas / nb)
            H[:, 3:6] = np.eye(3)
            # the piecewise-linear rate model degrades as the rate changes
            # faster, so residuals are down-weighted by the gyro increment
            dw = np.linalg.norm(sample.omega_meas - prev.omega_meas)
            r_var = 2 * self.mag_noise**2 / (dt * nb) ** 2 + self.gyro_sigma**2 + (self.model_error * dw) ** 2
            r_var = max(r_var, 1e-16)
            innov = y - self.x[3:6]
            S = H @ self.P @ H.T + r_var * np.eye(3)
            K = np.linalg.solve(S, H @ self.P).T
            self.x = self.x + K @ innov
            IKH = np.eye(9) - K @ H
            self.P = IKH @ self.P @ IKH.T + r_var * K @ K.T
            self.n_updates += 1
        return sample.omega_meas - self.x[:3]


class DetumbleController:
    """Closed-loop wrapper: one instance per run, holds estimator history."""

    def __init__(
        self,
        cfg: ControllerConfig,
        inertia,
        estimate_gyro_bias: bool = True,
        mag_noise: float = 15e-9,
        gyro_sigma: float = np.radians(0.005),
    ):
        self.cfg = cfg
        self.inertia = np.asarray(inertia, dtype=float)
        self.mu_max = np.asarray(cfg.mu_max)
        self.bdot = BdotEstimator(cfg.lowpass_alpha)
        self.filter = RateBiasFilter(mag_noise, gyro_sigma, estimate_bias=estimate_gyro_bias)
        self.flags = 0  # count of zero-field holds

    def __call__(self, sample: SensorSample) -> np.ndarray:
        cfg = self.cfg
        name = cfg.name
        bdot = self.bdot.update(sample)
        omega = self.filter.update(sample)
        if name == "none":
            return np.zeros(3)
        B = np.asarray(sample.B_meas, dtype=float)
        nb = np.linalg.norm(B)
        if nb == 0:
            self.flags += 1
            return np.zeros(3)
        h = self.inertia @ omega
        unit = B / nb
        if name == "bang_bang":
            return ctrl_bang_bang(h, B, self.mu_max)
        if name == "lyapunov_momentum":
            return ctrl_lyapunov_momentum(h, unit, cfg.k, self.mu_max)
        if name == "bcross":
            return ctrl_bcross(omega, B / nb**2, cfg.k, self.mu_max)
        if name == "projection":
            return ctrl_projection(h, B, cfg.k1, cfg.k2, cfg.eps, self.mu_max)
        if bdot is None:
            # derivative laws need two samples
            return np.zeros(3)
        if name == "bdot":
            return ctrl_bdot(bdot / nb, cfg.k, self.mu_max)
        if name == "bdot_variant":
            return ctrl_bdot_variant(unit, bdot / nb, cfg.k, cfg.eps, self.mu_max)
        # nonmonotonic: express the inertial-rate estimate as a body-frame
        # derivative so the prediction goes through the Bdot_N relation
        corrected = SensorSample(sample.t, B, omega)
        bdot_n = self.filter.rate * nb
        est = field_estimate(corrected, bdot_n - np.cross(omega, B), cfg.dt_pred)
        if np.linalg.norm(est.B_next) == 0:
            self.flags += 1
            return np.zeros(3)
        return ctrl_nonmonotonic(corrected, est, self.inertia, cfg)
