"""Analytic discrete-time state transition matrices built from Gamma blocks.

For the left-invariant error the dynamics matrix is constant over a sample
interval, and the transition matrix ``Phi = expm(F dt)`` has a closed form
in the Gamma functions of the body rates, plus two integrals ``Psi_1`` and
``Psi_2`` that couple specific force into the velocity and position rows.

For the right-invariant error the estimated rotation evolves inside the
interval; the blocks below freeze the estimated velocity, position and
gravitation at the start of the interval, keep the attitude evolution in
closed Gamma form, and evaluate the two non-collapsible cross integrals by
adaptive Gauss-Legendre quadrature.

Both matrices have exact identity bias rows and exactly zero blocks where
the structure demands them, and satisfy ``Phi -> I`` as ``dt -> 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import simpson

from .errordyn import Convention, NoiseParams
from .kinematics import EarthModel, ImuSample
from .liegroup import FrameMismatch, FrameTag, GroupElement, gamma, hat

__all__ = [
    "GammaIntegralsReport",
    "PsiIntegrals",
    "QuadratureNotConverged",
    "TransitionBlocks",
    "gamma_integrals_check",
    "phi_left",
    "phi_right",
    "psi_integrals",
    "qd_matrix",
]


class QuadratureNotConverged(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


@dataclass(frozen=True)
class TransitionBlocks:
    """15x15 discrete transition matrix viewed as a 5x5 grid of 3x3 blocks."""

    matrix: NDArray
    convention: Convention
    dt: float

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float).reshape(15, 15)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def block(self, i: int, j: int) -> NDArray:
        """3x3 block at grid row/column (0-based)."""
        return self.matrix[3 * i : 3 * i + 3, 3 * j : 3 * j + 3]


@dataclass(frozen=True)
class PsiIntegrals:
    """Specific-force coupling integrals and their quadrature error estimate."""

    psi1: NDArray
    psi2: NDArray
    error_estimate: float


# --- vectorized Gamma evaluation and quadrature -----------------------------


@lru_cache(maxsize=16)
def _gl_nodes(n: int) -> tuple[NDArray, NDArray]:
    return np.polynomial.legendre.leggauss(n)


_GAMMA_LEADS = (1.0, 1.0, 0.5, 1.0 / 6.0)


def _vec_sin(theta: NDArray, t2: NDArray) -> NDArray:
    small = theta < 1e-4
    safe = np.where(small, 1.0, theta)
    return np.where(
        small, 1.0 - t2 / 6.0 + t2**2 / 120.0 - t2**3 / 5040.0, np.sin(theta) / safe
    )


def _vec_cos(theta: NDArray, t2: NDArray) -> NDArray:
    small = theta < 1e-2
    safe = np.where(small, 1.0, theta)
    return np.where(
        small,
        0.5 - t2 / 24.0 + t2**2 / 720.0 - t2**3 / 40320.0,
        (1.0 - np.cos(theta)) / safe**2,
    )


def _vec_tms(theta: NDArray, t2: NDArray) -> NDArray:
    small = theta < 1e-2
    safe = np.where(small, 1.0, theta)
    return np.where(
        small,
        1.0 / 6.0 - t2 / 120.0 + t2**2 / 5040.0 - t2**3 / 362880.0,
        (theta - np.sin(theta)) / safe**3,
    )


def _vec_q2(theta: NDArray, t2: NDArray) -> NDArray:
    small = theta < 0.5
    safe = np.where(small, 1.0, theta)
    return np.where(
        small,
        1.0 / 24.0
        - t2 / 720.0
        + t2**2 / 40320.0
        - t2**3 / 3628800.0
        + t2**4 / 479001600.0,
        (t2 + 2.0 * np.cos(theta) - 2.0) / (2.0 * safe**4),
    )


def _vec_q3(theta: NDArray, t2: NDArray) -> NDArray:
    small = theta < 0.5
    safe = np.where(small, 1.0, theta)
    return np.where(
        small,
        1.0 / 120.0
        - t2 / 5040.0
        + t2**2 / 362880.0
        - t2**3 / 39916800.0
        + t2**4 / 6227020800.0,
        (t2 * theta - 6.0 * theta + 6.0 * np.sin(theta)) / (6.0 * safe**5),
    )


_VEC_COEFS = (
    (_vec_sin, _vec_cos),
    (_vec_cos, _vec_tms),
    (_vec_tms, _vec_q2),
    (_vec_q2, _vec_q3),
)


def _gamma_coefs_vec(m: int, theta: NDArray) -> tuple[NDArray, NDArray]:
    """Scalar coefficient pair (a, b) of Gamma_m for an array of angles."""
    t2 = theta * theta
    fa, fb = _VEC_COEFS[m]
    return fa(theta, t2), fb(theta, t2)


def _gamma_scaled(m: int, w: NDArray, s: NDArray) -> NDArray:
    """Stack of Gamma_m(w * s_i) over the sample points s, shape (N, 3, 3)."""
    wx = hat(w)
    wx2 = wx @ wx
    theta = np.linalg.norm(w) * s
    a, b = _gamma_coefs_vec(m, theta)
    out = _GAMMA_LEADS[m] * np.broadcast_to(np.eye(3), (s.size, 3, 3)).copy()
    out += (a * s)[:, None, None] * wx
    out += (b * s * s)[:, None, None] * wx2
    return out


def _hat_stack(vecs: NDArray) -> NDArray:
    """Stack of hat matrices for an (N, 3) array of vectors."""
    n = vecs.shape[0]
    out = np.zeros((n, 3, 3))
    out[:, 0, 1] = -vecs[:, 2]
    out[:, 0, 2] = vecs[:, 1]
    out[:, 1, 0] = vecs[:, 2]
    out[:, 1, 2] = -vecs[:, 0]
    out[:, 2, 0] = -vecs[:, 1]
    out[:, 2, 1] = vecs[:, 0]
    return out


_QUAD_ORDERS = (8, 12, 16, 24, 32, 48, 64, 96, 128)


def _adaptive_quad(integrands, dt: float, tol: float):
    """Integrate a family of matrix integrands over [0, dt] adaptively.

    ``integrands(s)`` maps an (N,) array of nodes to a list of (N, 3, 3)
    stacks.  Returns (list of 3x3 integrals, error estimate).
    """
    prev = None
    for n in _QUAD_ORDERS:
        nodes, weights = _gl_nodes(n)
        s = 0.5 * dt * (nodes + 1.0)
        w = 0.5 * dt * weights
        vals = [
            np.einsum("n,nij->ij", w, stack) for stack in integrands(s)
        ]
        if prev is not None:
            err = max(
                float(np.max(np.abs(a - b))) for a, b in zip(vals, prev)
            )
            if err <= tol:
                return vals, err
        prev = vals
    raise QuadratureNotConverged(
        f"quadrature error {err:.3e} above tolerance {tol:.3e} at order {n}"
    )


def psi_integrals(
    omega: NDArray, f: NDArray, dt: float, tol: float | None = None
) -> PsiIntegrals:
    """Specific-force coupling integrals of the left transition matrix.

    ``Psi_1 = int_0^dt (Gamma_0(w s) f)^ Gamma_1(w s) s ds`` and
    ``Psi_2 = int_0^dt Psi_1(s) ds``, the latter computed as the
    equivalent single integral with weight ``(dt - s)``.

    Raises
    ------
    QuadratureNotConverged
        If the adaptive rule cannot reach the tolerance
        (default ``1e-12 * max(1, |f| dt^2)``).
    """
    if dt <= 0.0:
        raise ValueError("psi_integrals requires dt > 0")
    omega = np.asarray(omega, dtype=float)
    f = np.asarray(f, dtype=float)
    if tol is None:
        tol = 1e-12 * max(1.0, float(np.linalg.norm(f)) * dt * dt)

    def integrands(s: NDArray):
        g0 = _gamma_scaled(0, omega, s)
        g1 = _gamma_scaled(1, omega, s)
        rotated_f = _hat_stack(np.einsum("nij,j->ni", g0, f))
        base = np.einsum("nij,njk->nik", rotated_f, g1) * s[:, None, None]
        return [base, (dt - s)[:, None, None] * base]

    (psi1, psi2), err = _adaptive_quad(integrands, dt, tol)
    return PsiIntegrals(psi1, psi2, err)


# --- transition matrices -----------------------------------------------------


def phi_left(imu: ImuSample, dt: float, tol: float | None = None) -> TransitionBlocks:
    """Analytic left-invariant transition matrix over one sample interval.

    Depends only on the (bias-corrected) gyro and accelerometer readings and
    the interval length, never on the state estimate.  Exact solution of
    ``dPhi/dt = F_l Phi`` for the constant left-invariant F.
    """
    if dt <= 0.0:
        raise ValueError("phi_left requires dt > 0")
    theta = imu.gyro * dt
    g0t = gamma(0, theta).T
    g1 = gamma(1, theta)
    g2 = gamma(2, theta)
    psi = psi_integrals(imu.gyro, imu.accel, dt, tol)

    m = np.eye(15)
    m[0:3, 0:3] = g0t
    m[3:6, 3:6] = g0t
    m[6:9, 6:9] = g0t
    m[0:3, 9:12] = -g0t @ g1 * dt
    m[3:6, 0:3] = -g0t @ hat(g1 @ imu.accel) * dt
    m[3:6, 9:12] = g0t @ psi.psi1
    m[3:6, 12:15] = -g0t @ g1 * dt
    m[6:9, 0:3] = -g0t @ hat(g2 @ imu.accel) * dt * dt
    m[6:9, 3:6] = g0t * dt
    m[6:9, 9:12] = g0t @ psi.psi2
    m[6:9, 12:15] = -g0t @ g2 * dt * dt
    return TransitionBlocks(m, Convention.LEFT_INVARIANT, dt)


def phi_right(
    xhat: GroupElement,
    imu: ImuSample,
    earth: EarthModel,
    dt: float,
    tol: float | None = None,
) -> TransitionBlocks:
    """Analytic right-invariant transition matrix over one sample interval.

    Freezes the estimated velocity, position and gravitation at the start of
    the interval; the estimated attitude evolves as
    ``Chat(s) = Gamma_0(-w_ie s) Chat_0 Gamma_0(w_b s)`` inside the
    derivation, which keeps every block in closed Gamma form except the two
    bias cross couplings, evaluated by quadrature.  At a stationary state
    the result coincides with ``expm(F_r dt)`` for the frozen F.
    """
    if dt <= 0.0:
        raise ValueError("phi_right requires dt > 0")
    if xhat.frame is not None and xhat.frame != FrameTag.ECEF_IB:
        raise FrameMismatch(f"phi_right requires ECEF_IB state, got {xhat.frame.name}")

    w_e = earth.omega_vec
    theta_e = w_e * dt
    theta_b = imu.gyro * dt
    c0 = xhat.rot
    grav = earth.gravitation_ecef(xhat.pos)
    e = gamma(0, theta_e).T  # transposed earth-rotation increment

    g1_b = gamma(1, theta_b)
    g2_b = gamma(2, theta_b)
    if tol is None:
        scale = max(
            1.0,
            float(np.linalg.norm(grav)) * dt * dt,
            float(np.linalg.norm(xhat.vel)) * dt,
            float(np.linalg.norm(xhat.pos)) * dt,
        )
        tol = 1e-12 * scale

    def integrands(s: NDArray):
        g0_es = _gamma_scaled(0, w_e, s)
        g0_bs = _gamma_scaled(0, imu.gyro, s)
        g1_bs = _gamma_scaled(1, imu.gyro, s)
        grav_x = _hat_stack(np.einsum("nij,j->ni", g0_es, grav))
        vel_x = _hat_stack(np.einsum("nij,j->ni", g0_es, xhat.vel))
        pos_x = _hat_stack(np.einsum("nij,j->ni", g0_es, xhat.pos))
        kappa = np.einsum("nij,jk,nkl->nil", grav_x, c0, g1_bs) * s[:, None, None]
        kappa += np.einsum("nij,jk,nkl->nil", vel_x, c0, g0_bs)
        pos_term = np.einsum("nij,jk,nkl->nil", pos_x, c0, g0_bs)
        return [kappa, (dt - s)[:, None, None] * kappa + pos_term]

    (q24, q34), _ = _adaptive_quad(integrands, dt, tol)

    m = np.eye(15)
    m[0:3, 0:3] = e
    m[3:6, 3:6] = e
    m[6:9, 6:9] = e
    m[6:9, 3:6] = e * dt
    m[0:3, 9:12] = -e @ c0 @ g1_b * dt
    m[3:6, 12:15] = e @ c0 @ g1_b * dt
    m[6:9, 12:15] = e @ c0 @ g2_b * dt * dt
    m[3:6, 0:3] = -e @ hat(gamma(1, theta_e) @ grav) * dt
    m[6:9, 0:3] = -e @ hat(gamma(2, theta_e) @ grav) * dt * dt
    m[3:6, 9:12] = e @ q24
    m[6:9, 9:12] = e @ q34
    return TransitionBlocks(m, Convention.RIGHT_INVARIANT, dt)


def qd_matrix(
    phi: TransitionBlocks | NDArray,
    g: NDArray,
    noise: NoiseParams,
    dt: float,
) -> NDArray:
    """Trapezoidal discrete process noise 0.5 (Phi Gc Phi^T + Gc) dt.

    ``Gc = G Qc G^T`` with the continuous PSDs of ``noise``.  The result is
    symmetrized, hence positive semidefinite up to roundoff.
    """
    if dt <= 0.0:
        raise ValueError("qd_matrix requires dt > 0")
    phi_m = phi.matrix if isinstance(phi, TransitionBlocks) else np.asarray(phi)
    gc = g @ noise.qc_matrix() @ g.T
    qd = 0.5 * dt * (phi_m @ gc @ phi_m.T + gc)
    return 0.5 * (qd + qd.T)


@dataclass(frozen=True)
class GammaIntegralsReport:
    """Residuals of the closed-form Gamma integral identities vs quadrature."""

    single: float
    double: float
    triple: float

    @property
    def max_residual(self) -> float:
        return max(self.single, self.double, self.triple)


def gamma_integrals_check(
    omega: NDArray, dt: float, points: int = 4001
) -> GammaIntegralsReport:
    """Check the nested integral identities of the exponential map.

    Compares ``int Gamma_0(w s) ds = Gamma_1(w dt) dt`` and its double and
    triple nested versions against composite Simpson quadrature on
    ``points`` samples.
    """
    if dt <= 0.0:
        raise ValueError("gamma_integrals_check requires dt > 0")
    omega = np.asarray(omega, dtype=float)
    s = np.linspace(0.0, dt, points)
    g0 = _gamma_scaled(0, omega, s)
    g1s = _gamma_scaled(1, omega, s) * s[:, None, None]
    g2s2 = _gamma_scaled(2, omega, s) * (s * s)[:, None, None]

    i1 = simpson(g0, x=s, axis=0)
    i2 = simpson(g1s, x=s, axis=0)
    i3 = simpson(g2s2, x=s, axis=0)

    theta = omega * dt
    r1 = float(np.max(np.abs(i1 - gamma(1, theta) * dt)))
    r2 = float(np.max(np.abs(i2 - gamma(2, theta) * dt * dt)))
    r3 = float(np.max(np.abs(i3 - gamma(3, theta) * dt**3)))
    return GammaIntegralsReport(r1, r2, r3)
