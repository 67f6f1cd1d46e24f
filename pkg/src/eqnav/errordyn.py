"""Invariant error states on SE2(3) and their linearized dynamics.

The right-invariant error is the group element ``eta_R = Xhat X^-1`` (world
frame mismatch); the left-invariant error is ``eta_L = Xhat^-1 X`` (body
frame mismatch).  The 15-dimensional filter error state appends gyro and
accelerometer bias errors ``db = b_true - b_hat``:

* right convention: ``(phi_e, Jrho_v, Jrho_r, db_g, db_a)`` where ``phi_e``
  is the earth-frame attitude error in the feedback sense
  ``C = exp(phi_e^) Chat`` and ``Jrho_v``/``Jrho_r`` are the exact velocity
  and position columns of ``eta_R``;
* left convention: ``(phi_b, Jrho_v^b, Jrho_r^b, db_g, db_a)`` with
  ``phi_b = log(rot(eta_L))`` and the columns of ``eta_L``.

Both parametrizations are exact (no small-angle step); the linearized F, G
and H matrices below are their first-order dynamics and measurement models,
validated against finite differences of the exact maps in the test suite.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .kinematics import EarthModel, ImuSample
from .liegroup import (
    FrameMismatch,
    FrameTag,
    GroupElement,
    Tangent9,
    compose,
    hat,
    inverse,
    se23_log,
    so3_exp,
    so3_log,
)

__all__ = [
    "Convention",
    "ErrorState15",
    "LeverArm",
    "NoiseParams",
    "apply_feedback",
    "error_state",
    "f_matrix",
    "g_matrix",
    "h_matrix",
    "left_error",
    "right_error",
]


class Convention(enum.Enum):
    LEFT_INVARIANT = "left"
    RIGHT_INVARIANT = "right"


@dataclass(frozen=True)
class NoiseParams:
    """White-noise and bias random-walk power spectral densities."""

    gyro_psd: float  # rad^2/s
    accel_psd: float  # m^2/s^3
    gyro_bias_psd: float = 0.0  # rad^2/s^3
    accel_bias_psd: float = 0.0  # m^2/s^5

    def __post_init__(self):
        for name in ("gyro_psd", "accel_psd", "gyro_bias_psd", "accel_bias_psd"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"NoiseParams.{name} must be >= 0")

    def qc_matrix(self) -> NDArray:
        """Continuous 12x12 noise covariance, ordered (w_g, w_a, w_bg, w_ba)."""
        return np.diag(
            [self.gyro_psd] * 3
            + [self.accel_psd] * 3
            + [self.gyro_bias_psd] * 3
            + [self.accel_bias_psd] * 3
        )


@dataclass(frozen=True)
class LeverArm:
    """GNSS antenna offset from the IMU reference point, body frame, meters."""

    l_b: NDArray

    def __post_init__(self):
        arr = np.array(self.l_b, dtype=float).reshape(3)
        if not np.all(np.isfinite(arr)):
            raise ValueError("LeverArm.l_b contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "l_b", arr)


@dataclass(frozen=True)
class ErrorState15:
    """15-dimensional invariant error state, convention-tagged.

    Components: attitude error ``phi``, group velocity/position error
    columns ``jrho_v``/``jrho_r``, and bias errors ``db = b_true - b_hat``.
    States of different conventions must never be mixed in arithmetic.
    """

    phi: NDArray
    jrho_v: NDArray
    jrho_r: NDArray
    db_g: NDArray
    db_a: NDArray
    convention: Convention = field(default=Convention.RIGHT_INVARIANT)

    def __post_init__(self):
        for name in ("phi", "jrho_v", "jrho_r", "db_g", "db_a"):
            arr = np.array(getattr(self, name), dtype=float).reshape(3)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"ErrorState15.{name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def as_vector(self) -> NDArray:
        return np.concatenate([self.phi, self.jrho_v, self.jrho_r, self.db_g, self.db_a])

    @staticmethod
    def from_vector(x: NDArray, convention: Convention) -> "ErrorState15":
        x = np.asarray(x, dtype=float).reshape(15)
        return ErrorState15(x[0:3], x[3:6], x[6:9], x[9:12], x[12:15], convention)

    @staticmethod
    def zero(convention: Convention) -> "ErrorState15":
        z = np.zeros(3)
        return ErrorState15(z, z, z, z, z, convention)


def _check_frames(xhat: GroupElement, x: GroupElement):
    if xhat.frame is not None and x.frame is not None and xhat.frame != x.frame:
        raise FrameMismatch(
            f"error between frames {xhat.frame.name} and {x.frame.name}"
        )


def _require_ecef_ib(x: GroupElement):
    if x.frame is not None and x.frame != FrameTag.ECEF_IB:
        raise FrameMismatch(f"operation requires ECEF_IB state, got {x.frame.name}")


def right_error(xhat: GroupElement, x: GroupElement) -> Tangent9:
    """Exact log of the right-invariant error Xhat X^-1."""
    _check_frames(xhat, x)
    return se23_log(compose(xhat, inverse(x)))


def left_error(xhat: GroupElement, x: GroupElement) -> Tangent9:
    """Exact log of the left-invariant error Xhat^-1 X."""
    _check_frames(xhat, x)
    return se23_log(compose(inverse(xhat), x))


def error_state(
    conv: Convention,
    xhat: GroupElement,
    x: GroupElement,
    db_g: NDArray | None = None,
    db_a: NDArray | None = None,
) -> ErrorState15:
    """Exact invariant error state between an estimate and a true state.

    The group part uses the error element of the chosen convention; the
    attitude component carries the feedback sign (``C = exp(phi^) Chat`` for
    the right convention).  Bias errors default to zero.
    """
    _check_frames(xhat, x)
    db_g = np.zeros(3) if db_g is None else np.asarray(db_g, dtype=float)
    db_a = np.zeros(3) if db_a is None else np.asarray(db_a, dtype=float)
    if conv is Convention.RIGHT_INVARIANT:
        eta = compose(xhat, inverse(x))
        phi = -so3_log(eta.rot)
    else:
        eta = compose(inverse(xhat), x)
        phi = so3_log(eta.rot)
    return ErrorState15(phi, eta.vel, eta.pos, db_g, db_a, conv)


def apply_feedback(
    conv: Convention,
    xhat: GroupElement,
    dx: ErrorState15,
    bg: NDArray,
    ba: NDArray,
) -> tuple[GroupElement, NDArray, NDArray]:
    """Correct a state estimate with an estimated error state.

    Uses the exact group retraction that inverts :func:`error_state`:
    right convention ``X = eta^-1 Xhat`` with
    ``eta = (exp(-phi^), Jrho_v, Jrho_r)``, left convention
    ``X = Xhat eta``.  To first order the right form reduces to the
    additive corrections ``C = exp(phi^) Chat``,
    ``v = vhat - Jrho_v - vhat x phi``, ``r = rhat - Jrho_r - rhat x phi``.
    Biases update as ``b, bg + dx.db_g``.
    """
    if dx.convention is not conv:
        raise ValueError(
            f"error state convention {dx.convention} does not match {conv}"
        )
    if conv is Convention.RIGHT_INVARIANT:
        eta = GroupElement(so3_exp(-dx.phi), dx.jrho_v, dx.jrho_r)
        corrected = compose(inverse(eta), xhat)
    else:
        eta = GroupElement(so3_exp(dx.phi), dx.jrho_v, dx.jrho_r)
        corrected = compose(xhat, eta)
    corrected = GroupElement(corrected.rot, corrected.vel, corrected.pos, xhat.frame)
    return corrected, np.asarray(bg) + dx.db_g, np.asarray(ba) + dx.db_a


def f_matrix(
    conv: Convention,
    xhat: GroupElement,
    imu: ImuSample,
    earth: EarthModel,
) -> NDArray:
    """Continuous-time error dynamics matrix F (15x15), ECEF_IB frame.

    ``imu`` must carry bias-corrected body rates.  The left-invariant F
    depends only on those rates; the right-invariant F depends on the state
    estimate through its rotation, velocity, position and the gravitation
    evaluated at the estimated position, plus the constant earth rate.
    """
    _require_ecef_ib(xhat)
    f = np.zeros((15, 15))
    eye = np.eye(3)
    if conv is Convention.RIGHT_INVARIANT:
        w_x = hat(earth.omega_vec)
        g_x = hat(earth.gravitation_ecef(xhat.pos))
        c = xhat.rot
        f[0:3, 0:3] = -w_x
        f[0:3, 9:12] = -c
        f[3:6, 0:3] = -g_x
        f[3:6, 3:6] = -w_x
        f[3:6, 9:12] = hat(xhat.vel) @ c
        f[3:6, 12:15] = c
        f[6:9, 3:6] = eye
        f[6:9, 6:9] = -w_x
        f[6:9, 9:12] = hat(xhat.pos) @ c
    else:
        w_x = hat(imu.gyro)
        f[0:3, 0:3] = -w_x
        f[0:3, 9:12] = -eye
        f[3:6, 0:3] = -hat(imu.accel)
        f[3:6, 3:6] = -w_x
        f[3:6, 12:15] = -eye
        f[6:9, 3:6] = eye
        f[6:9, 6:9] = -w_x
    return f


def g_matrix(conv: Convention, xhat: GroupElement) -> NDArray:
    """Noise input matrix G (15x12) for noise vector (w_g, w_a, w_bg, w_ba).

    The left form is constant; the right form is rotated into the world
    frame by the estimated attitude.  Bias random walks enter through
    identity rows in both conventions.
    """
    _require_ecef_ib(xhat)
    g = np.zeros((15, 12))
    eye = np.eye(3)
    if conv is Convention.RIGHT_INVARIANT:
        c = xhat.rot
        g[0:3, 0:3] = -c
        g[3:6, 0:3] = hat(xhat.vel) @ c
        g[3:6, 3:6] = c
        g[6:9, 0:3] = hat(xhat.pos) @ c
    else:
        g[0:3, 0:3] = -eye
        g[3:6, 3:6] = -eye
    g[9:12, 6:9] = eye
    g[12:15, 9:12] = eye
    return g


def h_matrix(conv: Convention, xhat: GroupElement, lever: LeverArm) -> NDArray:
    """Measurement Jacobian H (3x15) of a GNSS antenna-position fix.

    The innovation convention is ``z = y - (rhat + Chat l_b)`` (measured
    minus predicted).  Right convention:
    ``H = [-(rhat + Chat l_b)^, 0, -I, 0, 0]``; left convention:
    ``H = [-Chat l_b^, 0, Chat, 0, 0]``.
    """
    _require_ecef_ib(xhat)
    h = np.zeros((3, 15))
    c = xhat.rot
    if conv is Convention.RIGHT_INVARIANT:
        h[:, 0:3] = -hat(xhat.pos + c @ lever.l_b)
        h[:, 6:9] = -np.eye(3)
    else:
        h[:, 0:3] = -c @ hat(lever.l_b)
        h[:, 6:9] = c
    return h
