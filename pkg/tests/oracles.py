"""Independent numeric oracles for the test suite.

Everything here is deliberately brute force (truncated series, dense
matrix exponentials, Runge-Kutta, composite quadrature) and stays
independent of the production code paths it checks.
"""

from __future__ import annotations

import math

import numpy as np

from eqnav.kinematics import EarthModel
from eqnav.liegroup import GroupElement, hat


def gamma_series(m: int, phi, terms: int = 30) -> np.ndarray:
    """Truncated matrix power series sum_n (phi^)^n / (n+m)!."""
    acc = np.zeros((3, 3))
    power = np.eye(3)
    px = hat(np.asarray(phi, dtype=float))
    for n in range(terms):
        acc += power / math.factorial(n + m)
        power = power @ px
    return acc


def expm_series(a: np.ndarray, terms: int = 40) -> np.ndarray:
    """Dense matrix exponential by the plain Taylor series."""
    acc = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for n in range(1, terms):
        term = term @ a / n
        acc = acc + term
    return acc


def rk4_fixed(f, y0: np.ndarray, t0: float, dt: float, substeps: int) -> np.ndarray:
    """Classic RK4 for dy/dt = f(t, y) on dense arrays."""
    y = y0
    h = dt / substeps
    t = t0
    for _ in range(substeps):
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return y


def mech_deriv_ecef_ib(earth: EarthModel, x5: np.ndarray, omega_b, f_b) -> np.ndarray:
    """Exact 5x5 derivative of the transformed ECEF mechanization."""
    w = earth.omega_vec
    rot = x5[0:3, 0:3]
    vel = x5[0:3, 3]
    pos = x5[0:3, 4]
    m = np.zeros((5, 5))
    m[0:3, 0:3] = rot @ hat(omega_b) - hat(w) @ rot
    m[0:3, 3] = -np.cross(w, vel) + rot @ np.asarray(f_b) + earth.gravitation_ecef(pos)
    m[0:3, 4] = -np.cross(w, pos) + vel
    return m


def mech_deriv_ecef_eb(earth: EarthModel, x5: np.ndarray, omega_b, f_b) -> np.ndarray:
    """Exact 5x5 derivative of the earth-relative ECEF mechanization."""
    w = earth.omega_vec
    rot = x5[0:3, 0:3]
    vel = x5[0:3, 3]
    pos = x5[0:3, 4]
    m = np.zeros((5, 5))
    m[0:3, 0:3] = rot @ hat(omega_b) - hat(w) @ rot
    m[0:3, 3] = -2.0 * np.cross(w, vel) + rot @ np.asarray(f_b) + earth.gravity_ecef(pos)
    m[0:3, 4] = vel
    return m


def surface_state(earth: EarthModel, lat_deg=45.0, lon_deg=7.0, height=400.0,
                  v_ned=(30.0, 5.0, -1.0)):
    """Physically sensible ECEF attitude/velocity/position near the surface."""
    lat, lon = math.radians(lat_deg), math.radians(lon_deg)
    r0 = earth.geodetic_to_ecef(lat, lon, height)
    c = earth.ned_rotation(lat, lon)
    v_eb = c @ np.asarray(v_ned, dtype=float)
    return c, v_eb, r0


def random_rotation(rng, max_angle=math.pi - 0.2) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    from eqnav.liegroup import so3_exp

    return so3_exp(angle * axis)


def random_element(rng, vel=10.0, pos=100.0, frame=None) -> GroupElement:
    return GroupElement(
        random_rotation(rng), rng.uniform(-vel, vel, 3), rng.uniform(-pos, pos, 3), frame
    )
