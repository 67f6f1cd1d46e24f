"""Analytic transition matrices against RK4 and quadrature oracles."""

import math

import numpy as np
import pytest
from scipy.integrate import simpson

import eqnav.liegroup as lg
from eqnav.errordyn import Convention, NoiseParams, f_matrix, g_matrix
from eqnav.kinematics import EarthModel, FrameTag, ImuSample
from eqnav.transition import (
    QuadratureNotConverged,
    TransitionBlocks,
    gamma_integrals_check,
    phi_left,
    phi_right,
    psi_integrals,
    qd_matrix,
)
from oracles import surface_state


def rk4_transition(f_mat, dt, substeps=1000):
    phi = np.eye(15)
    h = dt / substeps
    for _ in range(substeps):
        k1 = f_mat @ phi
        k2 = f_mat @ (phi + 0.5 * h * k1)
        k3 = f_mat @ (phi + 0.5 * h * k2)
        k4 = f_mat @ (phi + h * k3)
        phi = phi + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return phi


@pytest.fixture
def stationary(earth):
    lat, lon, h = math.radians(45.0), math.radians(7.0), 400.0
    r0 = earth.geodetic_to_ecef(lat, lon, h)
    c = earth.ned_rotation(lat, lon)
    x = lg.GroupElement(c, np.cross(earth.omega_vec, r0), r0, FrameTag.ECEF_IB)
    imu = ImuSample(0.0, c.T @ earth.omega_vec, -(c.T @ earth.gravity_ecef(r0)))
    return x, imu


class TestPhiLeft:
    def test_zero_inputs_blocks(self):
        dt = 0.1
        blocks = phi_left(ImuSample(0.0, np.zeros(3), np.zeros(3)), dt)
        eye = np.eye(3)
        np.testing.assert_array_equal(blocks.block(0, 0), eye)
        np.testing.assert_array_equal(blocks.block(1, 1), eye)
        np.testing.assert_array_equal(blocks.block(2, 2), eye)
        np.testing.assert_allclose(blocks.block(0, 3), -eye * dt, atol=0)
        np.testing.assert_allclose(blocks.block(1, 4), -eye * dt, atol=0)
        np.testing.assert_allclose(blocks.block(2, 1), eye * dt, atol=0)
        np.testing.assert_allclose(blocks.block(2, 4), -eye * dt * dt / 2, atol=1e-18)
        assert np.abs(blocks.block(1, 0)).max() == 0.0
        assert np.abs(blocks.block(2, 0)).max() == 0.0

    def test_identity_limit(self, rng):
        imu = ImuSample(0.0, rng.uniform(-0.5, 0.5, 3), rng.uniform(-20, 20, 3))
        prev = None
        for dt in (1e-3, 1e-4, 1e-5):
            gap = np.abs(phi_left(imu, dt).matrix - np.eye(15)).max()
            assert gap <= 25.0 * dt  # -> I at rate O(dt)
            if prev is not None:
                assert gap < prev
            prev = gap

    def test_matches_rk4(self, earth, rng):
        anchor = lg.identity_element(FrameTag.ECEF_IB)
        worst = 0.0
        for _ in range(10):
            imu = ImuSample(0.0, rng.uniform(-0.5, 0.5, 3), rng.uniform(-20, 20, 3))
            f = f_matrix(Convention.LEFT_INVARIANT, anchor, imu, earth)
            worst = max(
                worst,
                np.abs(phi_left(imu, 0.01).matrix - rk4_transition(f, 0.01)).max(),
            )
        assert worst <= 1e-9

    def test_bias_rows_exact_identity(self, rng):
        imu = ImuSample(0.0, rng.uniform(-0.5, 0.5, 3), rng.uniform(-20, 20, 3))
        m = phi_left(imu, 0.02).matrix
        np.testing.assert_array_equal(m[9:15, :], np.eye(15)[9:15, :])
        # structural zero blocks
        assert np.abs(m[0:3, 3:9]).max() == 0.0
        assert np.abs(m[0:3, 12:15]).max() == 0.0
        assert np.abs(m[3:6, 6:9]).max() == 0.0

    def test_requires_positive_dt(self):
        with pytest.raises(ValueError):
            phi_left(ImuSample(0.0, np.zeros(3), np.zeros(3)), 0.0)


class TestPhiRight:
    def test_stationary_matches_frozen_rk4(self, earth, stationary):
        x, imu = stationary
        f = f_matrix(Convention.RIGHT_INVARIANT, x, imu, earth)
        for dt in (0.005, 0.01):
            gap = np.abs(phi_right(x, imu, earth, dt).matrix - rk4_transition(f, dt)).max()
            assert gap <= 1e-8

    def test_degenerate_earth_collapses_blocks(self, rng):
        # with negligible earth rate and gravitation, the closed forms of the
        # body-rate Gamma factors appear verbatim in the blocks
        tiny = EarthModel(omega_ie=1e-300, mu=1e-300)
        c0 = lg.so3_exp(rng.normal(size=3))
        vel, pos = rng.normal(size=3) * 100, rng.normal(size=3) * 1e6
        x = lg.GroupElement(c0, vel, pos, FrameTag.ECEF_IB)
        imu = ImuSample(0.0, np.array([0.2, -0.1, 0.3]), np.array([1.0, 2.0, -9.0]))
        dt = 0.01
        theta = imu.gyro * dt
        blocks = phi_right(x, imu, tiny, dt)
        np.testing.assert_allclose(blocks.block(0, 0), np.eye(3), atol=1e-15)
        np.testing.assert_allclose(
            blocks.block(0, 3), -c0 @ lg.gamma(1, theta) * dt, atol=1e-15
        )
        np.testing.assert_allclose(
            blocks.block(1, 4), c0 @ lg.gamma(1, theta) * dt, atol=1e-15
        )
        np.testing.assert_allclose(
            blocks.block(2, 4), c0 @ lg.gamma(2, theta) * dt * dt, atol=1e-15
        )
        assert np.abs(blocks.block(1, 0)).max() <= 1e-300  # gravitation negligible
        # velocity cross coupling collapses to (v x) C Gamma_1 dt
        want = lg.hat(vel) @ c0 @ lg.gamma(1, theta) * dt
        np.testing.assert_allclose(blocks.block(1, 3), want, atol=1e-12)

    def test_semigroup_stationary(self, earth, stationary):
        x, imu = stationary
        dt = 0.01
        one = phi_right(x, imu, earth, dt).matrix
        two = phi_right(x, imu, earth, 2 * dt).matrix
        assert np.abs(two - one @ one).max() <= 1e-9

    def test_moving_gap_is_second_order(self, earth, rng):
        c, v_eb, r0 = surface_state(earth)
        x = lg.GroupElement(
            c, v_eb + np.cross(earth.omega_vec, r0), r0, FrameTag.ECEF_IB
        )
        imu = ImuSample(
            0.0,
            c.T @ earth.omega_vec + np.array([0.02, -0.01, 0.05]),
            -(c.T @ earth.gravity_ecef(r0)) + np.array([1.5, 0.3, 0.0]),
        )
        f = f_matrix(Convention.RIGHT_INVARIANT, x, imu, earth)
        gaps = []
        for dt in (0.02, 0.01, 0.005):
            gaps.append(
                np.abs(phi_right(x, imu, earth, dt).matrix - rk4_transition(f, dt, 400)).max()
            )
        order1 = math.log2(gaps[0] / gaps[1])
        order2 = math.log2(gaps[1] / gaps[2])
        assert min(order1, order2) >= 1.9

    def test_frame_check(self, earth, stationary, rng):
        x, imu = stationary
        bad = lg.GroupElement(x.rot, x.vel, x.pos, FrameTag.NED_EB)
        with pytest.raises(lg.FrameMismatch):
            phi_right(bad, imu, earth, 0.01)

    def test_structural_blocks(self, earth, stationary):
        x, imu = stationary
        m = phi_right(x, imu, earth, 0.01).matrix
        np.testing.assert_array_equal(m[9:15, :], np.eye(15)[9:15, :])
        assert np.abs(m[0:3, 3:9]).max() == 0.0
        assert np.abs(m[0:3, 12:15]).max() == 0.0
        assert np.abs(m[3:6, 6:9]).max() == 0.0


class TestPsiIntegrals:
    def test_zero_omega_closed_form(self, rng):
        f = rng.normal(size=3) * 5
        dt = 0.02
        psi = psi_integrals(np.zeros(3), f, dt)
        np.testing.assert_allclose(psi.psi1, lg.hat(f) * dt * dt / 2, atol=1e-18)
        np.testing.assert_allclose(psi.psi2, lg.hat(f) * dt**3 / 6, atol=1e-19)

    def test_zero_force(self, rng):
        psi = psi_integrals(rng.normal(size=3), np.zeros(3), 0.01)
        assert np.abs(psi.psi1).max() == 0.0 and np.abs(psi.psi2).max() == 0.0

    def test_matches_simpson(self, rng):
        omega = np.array([0.3, -0.2, 0.4])
        f = np.array([1.0, 2.0, -9.0])
        dt = 0.5
        s = np.linspace(0.0, dt, 100_001)
        vals = np.array(
            [lg.hat(lg.gamma(0, omega * t) @ f) @ lg.gamma(1, omega * t) * t for t in s]
        )
        ref1 = simpson(vals, x=s, axis=0)
        ref2 = simpson((dt - s)[:, None, None] * vals, x=s, axis=0)
        psi = psi_integrals(omega, f, dt)
        assert np.abs(psi.psi1 - ref1).max() <= 1e-11
        assert np.abs(psi.psi2 - ref2).max() <= 1e-11

    def test_not_converged_raises(self):
        with pytest.raises(QuadratureNotConverged):
            psi_integrals(np.array([0.0, 0.0, 900.0]), np.ones(3), 1.0, tol=1e-300)


class TestQdMatrix:
    def test_zero_psd(self, stationary, earth):
        x, imu = stationary
        phi = phi_left(imu, 0.01)
        g = g_matrix(Convention.LEFT_INVARIANT, x)
        qd = qd_matrix(phi, g, NoiseParams(0, 0, 0, 0), 0.01)
        assert np.abs(qd).max() == 0.0

    def test_identity_phi(self, stationary, rng):
        x, _ = stationary
        g = g_matrix(Convention.LEFT_INVARIANT, x)
        noise = NoiseParams(1e-6, 1e-5, 1e-9, 1e-8)
        dt = 0.02
        qd = qd_matrix(np.eye(15), g, noise, dt)
        want = g @ noise.qc_matrix() @ g.T * dt
        np.testing.assert_allclose(qd, want, atol=1e-22)

    def test_psd(self, stationary, earth, rng):
        x, imu = stationary
        phi = phi_right(x, imu, earth, 0.01)
        g = g_matrix(Convention.RIGHT_INVARIANT, x)
        noise = NoiseParams(*(rng.uniform(0, 1e-4, 4)))
        qd = qd_matrix(phi, g, noise, 0.01)
        np.testing.assert_allclose(qd, qd.T, atol=0)
        eig = np.linalg.eigvalsh(qd)
        assert eig.min() >= -1e-15 * max(eig.max(), 1e-300)


class TestGammaIntegrals:
    def test_zero_omega(self):
        rep = gamma_integrals_check(np.zeros(3), 0.7)
        assert rep.max_residual <= 1e-13

    def test_small_and_large_angle(self, rng):
        w = rng.normal(size=3)
        w *= 0.1 / np.linalg.norm(w)
        assert gamma_integrals_check(w, 1.0).max_residual <= 1e-11
        w3 = rng.normal(size=3)
        w3 *= 3.0 / np.linalg.norm(w3)
        assert gamma_integrals_check(w3, 1.0).max_residual <= 1e-9


class TestTransitionBlocksType:
    def test_block_accessor(self, stationary, earth):
        x, imu = stationary
        blocks = phi_right(x, imu, earth, 0.01)
        np.testing.assert_array_equal(
            blocks.block(1, 2), blocks.matrix[3:6, 6:9]
        )
        assert blocks.convention is Convention.RIGHT_INVARIANT
        assert blocks.dt == 0.01
