"""Core SO(3) / SE2(3) matrix Lie group operations.

SE2(3) is the group of "direct spatial isometries": 5x5 matrices packing a
rotation matrix and two translation columns (here: attitude, velocity and
position of a vehicle).  Elements are kept in the factored form
``(R, v, p)``; the dense 5x5 embedding exists for tests and checks only.

All exponentials, logarithms and Jacobians are expressed through the family
of auxiliary functions ``Gamma_m(phi) = sum_n (phi^)^n / (n+m)!``, where
``Gamma_0`` is the SO(3) exponential (Rodrigues formula) and ``Gamma_1`` the
left Jacobian of SO(3).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "DegenerateRotationWarning",
    "FrameMismatch",
    "FrameTag",
    "GroupElement",
    "Tangent9",
    "adjoint",
    "compose",
    "gamma",
    "gamma0_deviation",
    "hat",
    "identity_element",
    "inverse",
    "is_rotation",
    "se23_exp",
    "se23_exp_matrix",
    "se23_log",
    "so3_exp",
    "so3_log",
    "vee",
]

# Closed-form Gamma coefficients lose digits to cancellation at small
# angles; below these per-coefficient thresholds the truncated even series
# is used instead.  The windows widen with the order of the cancellation:
# the Gamma_2/Gamma_3 closed forms subtract to O(theta^4)/O(theta^5)
# remainders, so their relative error grows like eps/theta^4 and the series
# (error ~ theta^10 / 9e10) is the more accurate branch up to theta ~ 0.5.
SMALL_ANGLE = 1e-4
_SMALL_COS = 1e-2
_SMALL_TMS = 1e-2
_SMALL_Q = 0.5

_ROTATION_TOL = 1e-9


class DegenerateRotationWarning(RuntimeWarning):
    """Rotation logarithm evaluated on the trace(R) = -1 branch."""


class FrameMismatch(ValueError):
    """Operands tagged with incompatible reference-frame conventions."""


class FrameTag(enum.Enum):
    """Frame convention of a navigation state on SE2(3).

    The tag records both the resolving frame (NED navigation frame or ECEF)
    and whether velocity/position are earth-relative (``EB``) or transformed
    inertial-relative (``IB``) quantities.
    """

    NED_EB = "ned_eb"
    NED_IB = "ned_ib"
    ECEF_EB = "ecef_eb"
    ECEF_IB = "ecef_ib"


def hat(v: NDArray) -> NDArray:
    """Skew-symmetric 3x3 matrix of a 3-vector (cross-product operator)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m: NDArray) -> NDArray:
    """Inverse of :func:`hat` for a (near) skew-symmetric matrix."""
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def is_rotation(mat: NDArray, tol: float = _ROTATION_TOL) -> bool:
    """True if ``mat`` is orthonormal with determinant +1 within ``tol``."""
    if mat.shape != (3, 3) or not np.all(np.isfinite(mat)):
        return False
    err = np.linalg.norm(mat.T @ mat - np.eye(3))
    return err <= tol and abs(np.linalg.det(mat) - 1.0) <= tol


# --- Gamma function family ------------------------------------------------
#
# Gamma_m(phi) = lead_m*I + a_m(theta)*phi^ + b_m(theta)*phi^^2, theta=|phi|.
# The scalar coefficients below are the closed forms and their small-angle
# series (four terms, accurate to O(theta^8)).


def _coef_sin(t2: float, theta: float) -> float:
    # sin(theta)/theta
    if theta < SMALL_ANGLE:
        return 1.0 - t2 / 6.0 + t2 * t2 / 120.0 - t2 * t2 * t2 / 5040.0
    return math.sin(theta) / theta


def _coef_cos(t2: float, theta: float) -> float:
    # (1 - cos(theta)) / theta^2
    if theta < _SMALL_COS:
        return 0.5 - t2 / 24.0 + t2 * t2 / 720.0 - t2 * t2 * t2 / 40320.0
    return (1.0 - math.cos(theta)) / t2


def _coef_tms(t2: float, theta: float) -> float:
    # (theta - sin(theta)) / theta^3
    if theta < _SMALL_TMS:
        return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2 * t2 * t2 / 362880.0
    return (theta - math.sin(theta)) / (t2 * theta)


def _coef_q2(t2: float, theta: float) -> float:
    # (theta^2 + 2 cos(theta) - 2) / (2 theta^4)
    if theta < _SMALL_Q:
        t4 = t2 * t2
        return (
            1.0 / 24.0
            - t2 / 720.0
            + t4 / 40320.0
            - t4 * t2 / 3628800.0
            + t4 * t4 / 479001600.0
        )
    return (t2 + 2.0 * math.cos(theta) - 2.0) / (2.0 * t2 * t2)


def _coef_q3(t2: float, theta: float) -> float:
    # (theta^3 - 6 theta + 6 sin(theta)) / (6 theta^5)
    if theta < _SMALL_Q:
        t4 = t2 * t2
        return (
            1.0 / 120.0
            - t2 / 5040.0
            + t4 / 362880.0
            - t4 * t2 / 39916800.0
            + t4 * t4 / 6227020800.0
        )
    return (t2 * theta - 6.0 * theta + 6.0 * math.sin(theta)) / (6.0 * t2 * t2 * theta)


_GAMMA_LEAD = (1.0, 1.0, 0.5, 1.0 / 6.0)
_GAMMA_COEFS = (
    (_coef_sin, _coef_cos),
    (_coef_cos, _coef_tms),
    (_coef_tms, _coef_q2),
    (_coef_q2, _coef_q3),
)


def gamma(m: int, phi: NDArray) -> NDArray:
    """Auxiliary function Gamma_m(phi) = sum_n (phi^)^n / (n+m)!.

    Gamma_0 is the SO(3) exponential, Gamma_1 the left Jacobian; Gamma_2 and
    Gamma_3 arise from nested time integrals of the exponential.  Satisfies
    the recurrences ``Gamma_2 phi^ + I = Gamma_1`` and
    ``Gamma_3 phi^ + I/2 = Gamma_2``.

    Parameters
    ----------
    m : int
        Order, 0 <= m <= 3.
    phi : ndarray, shape (3,)
        Rotation vector in radians.

    Returns
    -------
    ndarray, shape (3, 3)
    """
    if not 0 <= m <= 3:
        raise ValueError(f"gamma order must be in 0..3, got {m}")
    phi = np.asarray(phi, dtype=float)
    t2 = float(phi @ phi)
    theta = math.sqrt(t2)
    ca, cb = _GAMMA_COEFS[m]
    px = hat(phi)
    return _GAMMA_LEAD[m] * np.eye(3) + ca(t2, theta) * px + cb(t2, theta) * (px @ px)


def so3_exp(phi: NDArray) -> NDArray:
    """SO(3) exponential of a rotation vector (Rodrigues formula)."""
    return gamma(0, phi)


def gamma0_deviation(phi: NDArray) -> NDArray:
    """so3_exp(phi) - I computed without cancellation.

    For tiny rotations the deviation has norm ~|phi|, far below the identity
    entries; forming it directly keeps position updates of the group flow
    accurate at the meter scale on earth-radius states.
    """
    phi = np.asarray(phi, dtype=float)
    t2 = float(phi @ phi)
    theta = math.sqrt(t2)
    px = hat(phi)
    return _coef_sin(t2, theta) * px + _coef_cos(t2, theta) * (px @ px)


def so3_log(R: NDArray) -> NDArray:
    """Rotation vector of a rotation matrix, with |phi| <= pi.

    Uses the numerically stable atan2 form.  Near the half-turn
    (trace(R) close to -1) the rotation axis is extracted from the largest
    diagonal element and a :class:`DegenerateRotationWarning` is issued;
    a value is still returned.
    """
    R = np.asarray(R, dtype=float)
    w = 0.5 * vee(R - R.T)  # sin(theta) * axis
    s = float(np.linalg.norm(w))
    c = 0.5 * (float(np.trace(R)) - 1.0)
    theta = math.atan2(s, min(1.0, max(-1.0, c)))

    if theta > math.pi - SMALL_ANGLE:
        warnings.warn(
            "rotation logarithm near the pi branch; axis from largest diagonal",
            DegenerateRotationWarning,
            stacklevel=2,
        )
        k = int(np.argmax(np.diag(R)))
        one_mc = 1.0 - c
        ax = np.empty(3)
        ax[k] = math.sqrt(max((R[k, k] - c) / one_mc, 0.0))
        for j in range(3):
            if j != k:
                ax[j] = (R[k, j] + R[j, k]) / (2.0 * one_mc * ax[k])
        ax /= np.linalg.norm(ax)
        if s > 0.0 and float(ax @ w) < 0.0:
            ax = -ax
        return theta * ax

    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return w * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0)
    return w * (theta / s)


# --- SE2(3) ----------------------------------------------------------------


@dataclass(frozen=True)
class Tangent9:
    """Element of the se2(3) Lie algebra as a (phi, rho_v, rho_r) triple."""

    phi: NDArray
    rho_v: NDArray
    rho_r: NDArray

    def __post_init__(self):
        for name in ("phi", "rho_v", "rho_r"):
            arr = np.array(getattr(self, name), dtype=float).reshape(3)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"Tangent9.{name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def as_vector(self) -> NDArray:
        return np.concatenate([self.phi, self.rho_v, self.rho_r])

    @staticmethod
    def from_vector(x: NDArray) -> "Tangent9":
        x = np.asarray(x, dtype=float).reshape(9)
        return Tangent9(x[0:3], x[3:6], x[6:9])

    def as_matrix(self) -> NDArray:
        """Dense 5x5 hat form (zero bottom rows)."""
        m = np.zeros((5, 5))
        m[0:3, 0:3] = hat(self.phi)
        m[0:3, 3] = self.rho_v
        m[0:3, 4] = self.rho_r
        return m


@dataclass(frozen=True)
class GroupElement:
    """SE2(3) element: rotation, velocity column, position column.

    ``frame`` tags the navigation convention of the element; ``None`` marks
    frame-free elements (group errors, exponentials).  Composition raises
    :class:`FrameMismatch` only when both operands carry different tags.
    """

    rot: NDArray
    vel: NDArray
    pos: NDArray
    frame: FrameTag | None = field(default=None)

    def __post_init__(self):
        rot = np.array(self.rot, dtype=float).reshape(3, 3)
        if not is_rotation(rot):
            raise ValueError("GroupElement.rot is not a rotation matrix")
        rot.setflags(write=False)
        object.__setattr__(self, "rot", rot)
        for name in ("vel", "pos"):
            arr = np.array(getattr(self, name), dtype=float).reshape(3)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"GroupElement.{name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def as_matrix(self) -> NDArray:
        """Dense 5x5 embedding with bottom-right 2x2 identity."""
        m = np.eye(5)
        m[0:3, 0:3] = self.rot
        m[0:3, 3] = self.vel
        m[0:3, 4] = self.pos
        return m

    @staticmethod
    def from_matrix(m: NDArray, frame: FrameTag | None = None) -> "GroupElement":
        m = np.asarray(m, dtype=float)
        return GroupElement(m[0:3, 0:3], m[0:3, 3], m[0:3, 4], frame)


def identity_element(frame: FrameTag | None = None) -> GroupElement:
    return GroupElement(np.eye(3), np.zeros(3), np.zeros(3), frame)


def _resolve_frame(a: FrameTag | None, b: FrameTag | None) -> FrameTag | None:
    if a is not None and b is not None and a != b:
        raise FrameMismatch(f"cannot combine frames {a.name} and {b.name}")
    return a if a is not None else b


def compose(x: GroupElement, y: GroupElement) -> GroupElement:
    """Group product x*y in the factored (R, v, p) form."""
    frame = _resolve_frame(x.frame, y.frame)
    return GroupElement(
        x.rot @ y.rot, x.rot @ y.vel + x.vel, x.rot @ y.pos + x.pos, frame
    )


def inverse(x: GroupElement) -> GroupElement:
    """Group inverse (R^T, -R^T v, -R^T p)."""
    rt = x.rot.T
    return GroupElement(rt, -(rt @ x.vel), -(rt @ x.pos), x.frame)


def se23_exp(xi: Tangent9, frame: FrameTag | None = None) -> GroupElement:
    """Group exponential: (Gamma_0(phi), Gamma_1(phi) rho_v, Gamma_1(phi) rho_r)."""
    j = gamma(1, xi.phi)
    return GroupElement(gamma(0, xi.phi), j @ xi.rho_v, j @ xi.rho_r, frame)


def se23_log(x: GroupElement) -> Tangent9:
    """Group logarithm, exact inverse of :func:`se23_exp`."""
    phi = so3_log(x.rot)
    j = gamma(1, phi)
    sol = np.linalg.solve(j, np.column_stack([x.vel, x.pos]))
    return Tangent9(phi, sol[:, 0], sol[:, 1])


def se23_exp_matrix(w: NDArray) -> GroupElement:
    """Exponential of a dense se2(3) element (5x5 with zero bottom rows)."""
    w = np.asarray(w, dtype=float)
    return se23_exp(Tangent9(vee(w[0:3, 0:3]), w[0:3, 3], w[0:3, 4]))


def adjoint(x: GroupElement) -> NDArray:
    """9x9 adjoint of an SE2(3) element.

    Satisfies ``hat(Ad_X xi) = X hat(xi) X^-1`` for all tangent vectors,
    ordered as (phi, rho_v, rho_r).
    """
    ad = np.zeros((9, 9))
    ad[0:3, 0:3] = x.rot
    ad[3:6, 3:6] = x.rot
    ad[6:9, 6:9] = x.rot
    ad[3:6, 0:3] = hat(x.vel) @ x.rot
    ad[6:9, 0:3] = hat(x.pos) @ x.rot
    return ad
