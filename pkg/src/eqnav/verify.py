"""Self-contained property verification suite behind the ``verify`` command.

Each check recomputes its target through an independent numeric oracle
(truncated matrix series, Runge-Kutta integration, composite quadrature)
and reports the worst residual against a configurable tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errordyn import Convention, LeverArm, f_matrix
from .filter import FilterState, observability_matrix
from .kinematics import (
    EarthModel,
    ImuSample,
    build_dynamics,
    check_group_affine,
    lift,
    velocity_action,
)
from .liegroup import FrameTag, GroupElement, compose, gamma, hat, inverse, so3_exp
from .transition import gamma_integrals_check, phi_left, phi_right

__all__ = ["CheckResult", "run_all_checks"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance


def _surface_state(earth: EarthModel, lat_deg: float, lon_deg: float, h: float, frame: FrameTag):
    lat, lon = math.radians(lat_deg), math.radians(lon_deg)
    r0 = earth.geodetic_to_ecef(lat, lon, h)
    c = earth.ned_rotation(lat, lon)
    v_eb = c @ np.array([30.0, 5.0, -1.0])
    if frame is FrameTag.ECEF_EB:
        return GroupElement(c, v_eb, r0, frame)
    if frame is FrameTag.ECEF_IB:
        return GroupElement(c, v_eb + np.cross(earth.omega_vec, r0), r0, frame)
    r_n = earth.ned_position(lat, h)
    v_n = np.array([30.0, 5.0, -1.0])
    if frame is FrameTag.NED_EB:
        return GroupElement(np.eye(3), v_n, r_n, frame)
    return GroupElement(
        np.eye(3), v_n + np.cross(earth.omega_ie_ned(lat), r_n), r_n, frame
    )


def _random_element(rng, angle_max=2.5, vel=1e3, pos=1e3, frame=None):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return GroupElement(
        so3_exp(rng.uniform(0.0, angle_max) * axis),
        rng.uniform(-vel, vel, 3),
        rng.uniform(-pos, pos, 3),
        frame,
    )


def check_group_affine_all(earth: EarthModel, samples: int, tol: float, seed: int):
    rng = np.random.default_rng(seed)
    imu = ImuSample(0.0, rng.uniform(-0.02, 0.02, 3), rng.uniform(-15.0, 15.0, 3))
    worst = 0.0
    for frame in FrameTag:
        x = _surface_state(earth, 45.0, 7.0, 400.0, frame)
        pair = build_dynamics(frame, x, imu, earth)
        rep = check_group_affine(pair, samples, np.random.default_rng(seed + 1))
        worst = max(worst, rep.max_residual)
    return CheckResult("group_affine", worst, tol)


def check_lift_equivariance(earth: EarthModel, samples: int, tol: float, seed: int):
    rng = np.random.default_rng(seed)
    imu = ImuSample(0.0, rng.uniform(-0.02, 0.02, 3), rng.uniform(-15.0, 15.0, 3))
    x0 = _surface_state(earth, 45.0, 7.0, 400.0, FrameTag.ECEF_IB)
    pair = build_dynamics(FrameTag.ECEF_IB, x0, imu, earth)
    worst = 0.0
    for _ in range(samples):
        a = _random_element(rng)
        x = _random_element(rng)
        lam = lift(x, pair)
        moved = lift(compose(a, x), velocity_action(a, pair))
        back = inverse(a).as_matrix() @ moved @ a.as_matrix()
        worst = max(worst, float(np.linalg.norm(back - lam)))
    return CheckResult("lift_equivariance", worst, tol)


def _gamma_series(m: int, phi: NDArray, terms: int = 30) -> NDArray:
    acc = np.zeros((3, 3))
    power = np.eye(3)
    px = hat(phi)
    for n in range(terms):
        acc += power / math.factorial(n + m)
        power = power @ px
    return acc


def check_gamma_family(tol_series: float, tol_integrals: float, seed: int):
    rng = np.random.default_rng(seed)
    worst_series = 0.0
    for _ in range(50):
        phi = rng.normal(size=3)
        phi *= rng.uniform(1e-8, 3.0) / np.linalg.norm(phi)
        for m in range(4):
            worst_series = max(
                worst_series,
                float(np.abs(gamma(m, phi) - _gamma_series(m, phi)).max()),
            )
        r1 = gamma(2, phi) @ hat(phi) + np.eye(3) - gamma(1, phi)
        r2 = gamma(3, phi) @ hat(phi) + 0.5 * np.eye(3) - gamma(2, phi)
        worst_series = max(worst_series, float(np.abs(r1).max()), float(np.abs(r2).max()))
    series = CheckResult("gamma_series_recurrences", worst_series, tol_series)

    worst_int = 0.0
    for omega_norm, dt in ((0.1, 1.0), (3.0, 1.0), (0.5, 0.3)):
        omega = rng.normal(size=3)
        omega *= omega_norm / np.linalg.norm(omega)
        rep = gamma_integrals_check(omega, dt)
        worst_int = max(worst_int, rep.max_residual)
    integrals = CheckResult("gamma_integrals", worst_int, tol_integrals)
    return series, integrals


def _rk4_const(f: NDArray, dt: float, substeps: int) -> NDArray:
    phi = np.eye(15)
    h = dt / substeps
    for _ in range(substeps):
        k1 = f @ phi
        k2 = f @ (phi + 0.5 * h * k1)
        k3 = f @ (phi + 0.5 * h * k2)
        k4 = f @ (phi + h * k3)
        phi = phi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return phi


def check_phi_left(earth: EarthModel, tol: float, seed: int, cases: int = 20):
    rng = np.random.default_rng(seed)
    anchor = _surface_state(earth, 45.0, 7.0, 400.0, FrameTag.ECEF_IB)
    worst = 0.0
    for _ in range(cases):
        imu = ImuSample(0.0, rng.uniform(-0.5, 0.5, 3), rng.uniform(-20.0, 20.0, 3))
        f = f_matrix(Convention.LEFT_INVARIANT, anchor, imu, earth)
        gap = phi_left(imu, 0.01).matrix - _rk4_const(f, 0.01, 1000)
        worst = max(worst, float(np.abs(gap).max()))
    return CheckResult("phi_left_vs_rk4", worst, tol)


def check_phi_right(earth: EarthModel, tol: float, seed: int):
    lat, lon, h = math.radians(45.0), math.radians(7.0), 400.0
    r0 = earth.geodetic_to_ecef(lat, lon, h)
    c = earth.ned_rotation(lat, lon)
    x = GroupElement(c, np.cross(earth.omega_vec, r0), r0, FrameTag.ECEF_IB)
    imu = ImuSample(0.0, c.T @ earth.omega_vec, -(c.T @ earth.gravity_ecef(r0)))
    worst = 0.0
    for dt in (0.005, 0.01):
        f = f_matrix(Convention.RIGHT_INVARIANT, x, imu, earth)
        gap = phi_right(x, imu, earth, dt).matrix - _rk4_const(f, dt, 1000)
        worst = max(worst, float(np.abs(gap).max()))
    return CheckResult("phi_right_vs_frozen_rk4", worst, tol)


def heave_observability(
    earth: EarthModel,
    convention: Convention,
    m: int = 10,
    epoch_dt: float = 5.0,
    imu_rate: float = 10.0,
    lat_deg: float = 10.0,
    svd_cutoff: float = 1e-8,
):
    """Observability analysis on a vertical-heave trajectory.

    Pure vertical specific-force variation breaks the roll/pitch vs
    accelerometer-bias degeneracies while keeping the rotation-about-gravity
    symmetry exact, which isolates the single claimed unobservable
    direction.
    """
    lat, lon, h = math.radians(lat_deg), math.radians(7.0), 200.0
    r0 = earth.geodetic_to_ecef(lat, lon, h)
    c = earth.ned_rotation(lat, lon)
    we = earth.omega_vec
    g0 = earth.gravity_ecef(r0)
    up = -g0 / np.linalg.norm(g0)
    amp, freq = 0.1, 3.0

    def state(t: float) -> GroupElement:
        r = r0 + up * amp * math.sin(freq * t)
        v_eb = up * amp * freq * math.cos(freq * t)
        return GroupElement(c, v_eb + np.cross(we, r), r, FrameTag.ECEF_IB)

    def rates(t: float):
        r = r0 + up * amp * math.sin(freq * t)
        v_eb = up * amp * freq * math.cos(freq * t)
        a_eb = -up * amp * freq * freq * math.sin(freq * t)
        v_ib = v_eb + np.cross(we, r)
        dv_ib = a_eb + np.cross(we, v_eb)
        return c.T @ we, c.T @ (dv_ib + np.cross(we, v_ib) - earth.gravitation_ecef(r))

    n = int(epoch_dt * m * imu_rate) + 1
    imu = [ImuSample(k / imu_rate, *rates(k / imu_rate)) for k in range(n)]
    states = [
        FilterState(state(k * epoch_dt), np.zeros(3), np.zeros(3), np.eye(15), k * epoch_dt, convention)
        for k in range(m + 1)
    ]
    lever = LeverArm(np.array([0.5, 0.3, -1.2]))
    rep = observability_matrix(states, imu, lever, m=m, earth=earth, svd_cutoff=svd_cutoff)

    grav = earth.gravitation_ecef(r0)
    if convention is Convention.LEFT_INVARIANT:
        grav = c.T @ grav
    null_vec = rep.null_space[:, -1] if rep.null_space.shape[1] else np.linalg.svd(rep.matrix)[2][-1]
    phi_part = null_vec[0:3]
    cosang = abs(phi_part @ grav) / (np.linalg.norm(phi_part) * np.linalg.norm(grav) + 1e-300)
    angle = math.acos(min(1.0, cosang))
    return rep, angle


def check_observability(earth: EarthModel, tol_angle: float, seed: int):
    del seed  # deterministic scenario
    rep, angle = heave_observability(earth, Convention.LEFT_INVARIANT)
    rank_res = abs(rep.rank - 14)
    return (
        CheckResult("observability_rank_left_deficiency_1", float(rank_res), 0.5),
        CheckResult("observability_null_gravity_angle", angle, tol_angle),
    )


def run_all_checks(earth: EarthModel, tolerances: dict, seed: int = 0) -> list[CheckResult]:
    """Run the full property suite with the supplied tolerances."""
    results = [
        check_group_affine_all(earth, 1000, tolerances["tol_group_affine"], seed),
        check_lift_equivariance(earth, 1000, tolerances["tol_equivariance"], seed + 1),
    ]
    results.extend(
        check_gamma_family(
            tolerances["tol_gamma_series"], tolerances["tol_gamma_integrals"], seed + 2
        )
    )
    results.append(check_phi_left(earth, tolerances["tol_phi_left"], seed + 3))
    results.append(check_phi_right(earth, tolerances["tol_phi_right"], seed + 4))
    results.extend(check_observability(earth, tolerances["tol_null_angle"], seed + 5))
    return results
