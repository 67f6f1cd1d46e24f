"""15-state invariant Kalman filter in the transformed ECEF frame.

The filter propagates an SE2(3) state plus gyro/accel biases with the exact
group flow and the analytic transition matrices, and corrects with GNSS
antenna-position fixes through either the left- or right-invariant error
parametrization.  A single gain/Joseph code path serves both conventions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errordyn import (
    Convention,
    ErrorState15,
    LeverArm,
    NoiseParams,
    apply_feedback,
    error_state,
    g_matrix,
    h_matrix,
)
from .kinematics import (
    EarthModel,
    ImuSample,
    NonMonotonicTime,
    build_dynamics,
    flow,
)
from .liegroup import FrameMismatch, FrameTag, GroupElement
from .transition import phi_left, phi_right, qd_matrix

__all__ = [
    "EpochRecord",
    "FilterState",
    "GnssFix",
    "ObservabilityReport",
    "SingularInnovationCov",
    "observability_matrix",
    "predict",
    "run",
    "update_gnss",
]

_COND_BOUND = 1e12


class SingularInnovationCov(np.linalg.LinAlgError):
    """Innovation covariance not invertible within the conditioning bound."""


@dataclass(frozen=True)
class GnssFix:
    """GNSS antenna position fix in ECEF coordinates with its covariance."""

    t: float
    pos_ecef: NDArray
    cov: NDArray

    def __post_init__(self):
        pos = np.array(self.pos_ecef, dtype=float).reshape(3)
        cov = np.array(self.cov, dtype=float).reshape(3, 3)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(cov))):
            raise ValueError("GnssFix contains non-finite values")
        if np.linalg.norm(cov - cov.T) > 1e-9 * max(1.0, np.linalg.norm(cov)):
            raise ValueError("GnssFix.cov must be symmetric")
        if np.any(np.linalg.eigvalsh(cov) <= 0.0):
            raise ValueError("GnssFix.cov must be positive definite")
        pos.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "pos_ecef", pos)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True)
class FilterState:
    """Filter mean (group state plus biases) and error covariance.

    ``P`` is the covariance of the 15-dimensional invariant error state in
    the chosen convention.  Instances are immutable; predict/update return
    new states.
    """

    x: GroupElement
    bg: NDArray
    ba: NDArray
    p: NDArray
    t: float
    convention: Convention = field(default=Convention.RIGHT_INVARIANT)

    def __post_init__(self):
        if self.x.frame is not None and self.x.frame != FrameTag.ECEF_IB:
            raise FrameMismatch("filter state must be in the ECEF_IB frame")
        for name in ("bg", "ba"):
            arr = np.array(getattr(self, name), dtype=float).reshape(3)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        p = np.array(self.p, dtype=float).reshape(15, 15)
        scale = max(1.0, float(np.abs(p).max()))
        if np.abs(p - p.T).max() > 1e-12 * scale:
            raise ValueError("FilterState.p must be symmetric")
        if np.linalg.eigvalsh(p).min() < -1e-10 * max(np.trace(p), 1e-300):
            raise ValueError("FilterState.p must be positive semidefinite")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)


def predict(
    state: FilterState,
    imu: ImuSample,
    noise: NoiseParams,
    earth: EarthModel,
    imu_prev: ImuSample | None = None,
) -> FilterState:
    """Propagate mean and covariance to the IMU sample time.

    The mean advances with the exact group flow of the ECEF_IB pair built
    from bias-corrected rates (with a midpoint rebuild of the
    state-dependent columns); the covariance advances with the analytic
    transition matrix of the state convention and the trapezoidal discrete
    process noise.  Biases are random constants between updates.

    When ``imu_prev`` is given, the interval uses trapezoidal averaging of
    the two samples' rates (second-order input handling for batch runs).

    Raises
    ------
    NonMonotonicTime
        If ``imu.t < state.t``.  A zero-length interval returns the state
        unchanged (duplicate timestamps are rejected at the stream level).
    """
    dt = imu.t - state.t
    if dt < 0.0:
        raise NonMonotonicTime(f"IMU sample at t={imu.t} before state t={state.t}")
    if dt == 0.0:
        return state

    if imu_prev is not None:
        gyro = 0.5 * (imu_prev.gyro + imu.gyro)
        accel = 0.5 * (imu_prev.accel + imu.accel)
    else:
        gyro = imu.gyro
        accel = imu.accel
    corrected = ImuSample(state.t, gyro - state.bg, accel - state.ba)

    pair = build_dynamics(FrameTag.ECEF_IB, state.x, corrected, earth)
    half = flow(state.x, pair, 0.5 * dt)
    pair_mid = build_dynamics(FrameTag.ECEF_IB, half, corrected, earth)
    x_new = flow(state.x, pair_mid, dt)

    if state.convention is Convention.RIGHT_INVARIANT:
        phi = phi_right(state.x, corrected, earth, dt)
    else:
        phi = phi_left(corrected, dt)
    g = g_matrix(state.convention, state.x)
    qd = qd_matrix(phi, g, noise, dt)
    p_new = phi.matrix @ state.p @ phi.matrix.T + qd
    p_new = 0.5 * (p_new + p_new.T)

    return FilterState(x_new, state.bg, state.ba, p_new, imu.t, state.convention)


def update_gnss(
    state: FilterState,
    fix: GnssFix,
    lever: LeverArm,
    time_slop: float = 1e-6,
) -> tuple[FilterState, NDArray, float]:
    """Correct the state with a GNSS antenna-position fix.

    Innovation ``z = y - (rhat + Chat l_b)``; gain from the convention's
    measurement Jacobian; covariance update in Joseph form; feedback through
    the exact group retraction.  Returns the corrected state, the innovation
    and the normalized innovation squared (NIS).

    Raises
    ------
    SingularInnovationCov
        If the innovation covariance conditioning exceeds 1e12.
    ValueError
        If the fix time is farther than ``time_slop`` from the state time.
    """
    if abs(fix.t - state.t) > time_slop:
        raise ValueError(
            f"fix at t={fix.t} not aligned with state t={state.t} within {time_slop}"
        )

    h = h_matrix(state.convention, state.x, lever)
    z = fix.pos_ecef - (state.x.pos + state.x.rot @ lever.l_b)
    s = h @ state.p @ h.T + fix.cov
    s = 0.5 * (s + s.T)
    cond = np.linalg.cond(s)
    if not np.isfinite(cond) or cond > _COND_BOUND:
        raise SingularInnovationCov(f"innovation covariance condition {cond:.3e}")

    k = np.linalg.solve(s, h @ state.p).T
    dx_vec = k @ z
    dx = ErrorState15.from_vector(dx_vec, state.convention)
    x_new, bg_new, ba_new = apply_feedback(
        state.convention, state.x, dx, state.bg, state.ba
    )

    ikh = np.eye(15) - k @ h
    p_new = ikh @ state.p @ ikh.T + k @ fix.cov @ k.T
    p_new = 0.5 * (p_new + p_new.T)

    nis = float(z @ np.linalg.solve(s, z))
    new_state = FilterState(x_new, bg_new, ba_new, p_new, state.t, state.convention)
    return new_state, z, nis


@dataclass(frozen=True)
class ObservabilityReport:
    """Stacked observability matrix with its numeric rank analysis."""

    matrix: NDArray
    rank: int
    singular_values: NDArray
    null_space: NDArray  # columns span the numeric null space


def observability_matrix(
    states: list[FilterState],
    imu: list[ImuSample],
    lever: LeverArm,
    m: int,
    earth: EarthModel | None = None,
    svd_cutoff: float = 1e-8,
) -> ObservabilityReport:
    """Discrete-time observability matrix over ``m + 1`` measurement epochs.

    Stacks ``H_l Phi(t_l, t_k)`` for ``l = k .. k+m`` where the cumulative
    transition matrices are products of the per-IMU-interval analytic
    matrices.  ``states`` must hold the filter states at the measurement
    epochs (first entry is the anchor ``t_k``); ``imu`` the bias-corrected
    samples covering the window.  Numeric rank uses the relative singular
    value cutoff ``svd_cutoff * sigma_max``.
    """
    if m < 1:
        raise ValueError("observability analysis needs m >= 1")
    if len(states) < m + 1:
        raise ValueError(f"need {m + 1} epoch states, got {len(states)}")
    earth = earth if earth is not None else EarthModel()
    conv = states[0].convention

    rows = [h_matrix(conv, states[0].x, lever)]
    phi_cum = np.eye(15)
    epoch_times = [s.t for s in states[: m + 1]]
    epoch_idx = 1
    state_idx = 0
    for prev, cur in zip(imu[:-1], imu[1:]):
        if epoch_idx > m:
            break
        dt = cur.t - prev.t
        if dt <= 0.0:
            raise NonMonotonicTime(f"IMU timestamps not increasing at t={cur.t}")
        # transition evaluated at the epoch state preceding this interval
        while (
            state_idx + 1 < len(epoch_times)
            and epoch_times[state_idx + 1] <= prev.t + 1e-12
        ):
            state_idx += 1
        anchor = states[state_idx]
        if conv is Convention.RIGHT_INVARIANT:
            phi = phi_right(anchor.x, prev, earth, dt)
        else:
            phi = phi_left(prev, dt)
        phi_cum = phi.matrix @ phi_cum
        if abs(cur.t - epoch_times[epoch_idx]) <= 1e-9:
            rows.append(h_matrix(conv, states[epoch_idx].x, lever) @ phi_cum)
            epoch_idx += 1

    big = np.vstack(rows)
    u, sv, vt = np.linalg.svd(big, full_matrices=True)
    rank = int(np.sum(sv > svd_cutoff * sv[0]))
    null = vt[rank:].T
    return ObservabilityReport(big, rank, sv, null)


@dataclass(frozen=True)
class EpochRecord:
    """Per-epoch filter output, with consistency statistics when available."""

    t: float
    state: FilterState
    p_diag: NDArray
    innovation: NDArray | None = None
    nis: float | None = None
    error: NDArray | None = None
    nees: float | None = None


def run(
    imu: list[ImuSample],
    gnss: list[GnssFix],
    initial: FilterState,
    noise: NoiseParams,
    earth: EarthModel,
    lever: LeverArm,
    truth: list[tuple[float, GroupElement]] | None = None,
    truth_biases: tuple[NDArray, NDArray] | None = None,
    time_slop: float = 1e-6,
) -> list[EpochRecord]:
    """Interleave predictions and GNSS updates over time-sorted streams.

    Fixes are applied at the nearest IMU epoch within ``time_slop`` of their
    timestamp (no interpolation).  IMU intervals use trapezoidal rate
    averaging.  When ground truth is supplied, each record carries the error
    in the filter's invariant parametrization and the NEES.

    Raises
    ------
    NonMonotonicTime
        If either stream is not strictly increasing in time, with the
        offending epoch named.
    """
    for name, times in (("imu", [s.t for s in imu]), ("gnss", [f.t for f in gnss])):
        for a, b in zip(times[:-1], times[1:]):
            if b <= a:
                raise NonMonotonicTime(f"{name} stream not increasing at t={b}")

    truth_map = dict(truth) if truth is not None else {}

    def make_record(state, innovation=None, nis=None):
        error = nees = None
        if truth is not None and state.t in truth_map:
            db_g = db_a = None
            if truth_biases is not None:
                db_g = truth_biases[0] - state.bg
                db_a = truth_biases[1] - state.ba
            err = error_state(
                state.convention, state.x, truth_map[state.t], db_g, db_a
            ).as_vector()
            error = err
            nees = float(err @ np.linalg.solve(state.p, err))
        return EpochRecord(
            state.t, state, np.diag(state.p).copy(), innovation, nis, error, nees
        )

    # align each fix with its nearest IMU epoch (no interpolation)
    imu_times = np.array([s.t for s in imu])
    fixes_at: dict[int, GnssFix] = {}
    for fix in gnss:
        idx = int(np.argmin(np.abs(imu_times - fix.t)))
        if abs(imu_times[idx] - fix.t) > time_slop:
            raise ValueError(
                f"no IMU epoch within {time_slop} s of GNSS fix at t={fix.t}"
            )
        fixes_at[idx] = fix

    records = [make_record(initial)]
    state = initial
    for i, (prev, cur) in enumerate(zip(imu[:-1], imu[1:])):
        if cur.t <= state.t:
            continue
        try:
            state = predict(state, cur, noise, earth, imu_prev=prev)
            innovation = nis = None
            fix = fixes_at.get(i + 1)
            if fix is not None:
                aligned = GnssFix(state.t, fix.pos_ecef, fix.cov)
                state, innovation, nis = update_gnss(state, aligned, lever)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise type(exc)(f"at epoch t={cur.t}: {exc}") from exc
        records.append(make_record(state, innovation, nis))
    return records
