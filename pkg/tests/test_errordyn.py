"""Invariant error states, linearized F/G/H, feedback correction."""

import numpy as np
import pytest

import eqnav.liegroup as lg
from eqnav.errordyn import (
    Convention,
    ErrorState15,
    LeverArm,
    NoiseParams,
    apply_feedback,
    error_state,
    f_matrix,
    g_matrix,
    h_matrix,
    left_error,
    right_error,
)
from eqnav.kinematics import EarthModel, FrameTag, ImuSample
from oracles import mech_deriv_ecef_ib, random_element, surface_state

RIGHT = Convention.RIGHT_INVARIANT
LEFT = Convention.LEFT_INVARIANT


@pytest.fixture
def xhat(earth):
    c, v_eb, r0 = surface_state(earth)
    return lg.GroupElement(
        c, v_eb + np.cross(earth.omega_vec, r0), r0, FrameTag.ECEF_IB
    )


@pytest.fixture
def imu(rng):
    return ImuSample(0.0, np.array([0.01, -0.02, 0.03]), np.array([0.5, -0.3, -9.7]))


def reconstruct_truth(conv, xhat, dx):
    """True group state implied by an estimate and an exact error state."""
    if conv is RIGHT:
        eta = lg.GroupElement(lg.so3_exp(-dx.phi), dx.jrho_v, dx.jrho_r)
        return lg.compose(lg.inverse(eta), xhat)
    eta = lg.GroupElement(lg.so3_exp(dx.phi), dx.jrho_v, dx.jrho_r)
    return lg.compose(xhat, eta)


class TestErrorDefinitions:
    def test_zero_error(self, xhat):
        for fn in (right_error, left_error):
            xi = fn(xhat, xhat)
            assert np.abs(xi.as_vector()).max() <= 1e-9

    def test_right_exact_log(self, xhat, rng):
        xi = lg.Tangent9(rng.normal(size=3) * 0.3, rng.normal(size=3), rng.normal(size=3))
        xtilde = lg.compose(lg.se23_exp(xi), xhat)
        got = right_error(xtilde, xhat)
        # tolerance is a few ulps of the earth-radius position scale
        assert np.abs(got.as_vector() - xi.as_vector()).max() <= 1e-8

    def test_left_exact_log(self, xhat, rng):
        xi = lg.Tangent9(rng.normal(size=3) * 0.3, rng.normal(size=3), rng.normal(size=3))
        xtilde = lg.compose(xhat, lg.se23_exp(lg.Tangent9(-xi.phi, -xi.rho_v, -xi.rho_r)))
        got = left_error(xtilde, xhat)
        assert np.abs(got.as_vector() - xi.as_vector()).max() <= 1e-8

    def test_right_first_order_velocity(self, rng):
        # pure velocity perturbation: group column approaches dv quadratically
        c, v, r = surface_state(EarthModel(), v_ned=(5.0, 2.0, -1.0))
        x = lg.GroupElement(c, v, r * 1e-4, FrameTag.ECEF_IB)  # moderate scale
        dv = rng.normal(size=3)
        prev = None
        for eps in (1e-2, 1e-3, 1e-4):
            xt = lg.GroupElement(x.rot, x.vel + eps * dv, x.pos, x.frame)
            xi = right_error(xt, x)
            resid = np.linalg.norm(lg.gamma(1, xi.phi) @ xi.rho_v - eps * dv)
            assert resid <= 10 * eps**2 * max(1.0, np.linalg.norm(dv))
            prev = resid

    def test_left_first_order_velocity(self, xhat, rng):
        dv = rng.normal(size=3)
        for eps in (1e-3, 1e-5):
            xt = lg.GroupElement(xhat.rot, xhat.vel + eps * dv, xhat.pos, xhat.frame)
            dx = error_state(LEFT, xt, xhat)
            want = -(xt.rot.T @ (eps * dv))
            assert np.linalg.norm(dx.jrho_v - want) <= 10 * eps**2

    def test_frame_mismatch(self, xhat):
        other = lg.GroupElement(xhat.rot, xhat.vel, xhat.pos, FrameTag.NED_EB)
        with pytest.raises(lg.FrameMismatch):
            right_error(xhat, other)


class TestErrorStateType:
    def test_convention_mixing_rejected(self, xhat):
        dx = ErrorState15.zero(LEFT)
        with pytest.raises(ValueError):
            apply_feedback(RIGHT, xhat, dx, np.zeros(3), np.zeros(3))

    def test_vector_roundtrip(self, rng):
        v = rng.normal(size=15)
        dx = ErrorState15.from_vector(v, RIGHT)
        np.testing.assert_array_equal(dx.as_vector(), v)
        assert dx.convention is RIGHT


class TestFeedback:
    def test_zero_dx(self, xhat):
        for conv in (RIGHT, LEFT):
            out, bg, ba = apply_feedback(
                conv, xhat, ErrorState15.zero(conv), np.zeros(3), np.zeros(3)
            )
            assert np.abs(out.as_matrix() - xhat.as_matrix()).max() == 0.0

    def test_exact_roundtrip(self, xhat, rng):
        for conv in (RIGHT, LEFT):
            xi = lg.Tangent9(
                rng.normal(size=3) * 0.2, rng.normal(size=3), rng.normal(size=3) * 10
            )
            x_true = (
                lg.compose(lg.se23_exp(xi), xhat)
                if conv is RIGHT
                else lg.compose(xhat, lg.se23_exp(xi))
            )
            bg_t, ba_t = rng.normal(size=3) * 1e-4, rng.normal(size=3) * 1e-3
            dx = error_state(conv, xhat, x_true, bg_t, ba_t)
            out, bg, ba = apply_feedback(conv, xhat, dx, np.zeros(3), np.zeros(3))
            assert np.abs(out.as_matrix() - x_true.as_matrix()).max() <= 1e-10 * max(
                1.0, np.abs(x_true.as_matrix()).max()
            )
            np.testing.assert_allclose(bg, bg_t, atol=0)
            np.testing.assert_allclose(ba, ba_t, atol=0)

    def test_right_first_order_literal(self, rng):
        # against the additive small-error correction formulas, desk scale
        c, v, r = surface_state(EarthModel(), v_ned=(5.0, 2.0, -1.0))
        xhat = lg.GroupElement(c, v, r * 1e-6, FrameTag.ECEF_IB)
        d = rng.normal(size=15)
        d *= 1e-6 / np.linalg.norm(d)
        dx = ErrorState15.from_vector(d, RIGHT)
        out, _, _ = apply_feedback(RIGHT, xhat, dx, np.zeros(3), np.zeros(3))
        rot_lit = lg.so3_exp(dx.phi) @ xhat.rot
        vel_lit = xhat.vel - dx.jrho_v - np.cross(xhat.vel, dx.phi)
        pos_lit = xhat.pos - dx.jrho_r - np.cross(xhat.pos, dx.phi)
        assert np.abs(out.rot - rot_lit).max() <= 1e-11
        assert np.abs(out.vel - vel_lit).max() <= 1e-11
        assert np.abs(out.pos - pos_lit).max() <= 1e-11


def exact_error_rate(conv, earth, x_true, bg_true, ba_true, omega_meas, f_meas, dx_vec):
    """d/dt of the exact error state, by matrix calculus (no time stepping)."""
    dx = ErrorState15.from_vector(dx_vec, conv)
    # estimate implied by the error state (inverse of reconstruct_truth)
    if conv is RIGHT:
        eta = lg.GroupElement(lg.so3_exp(-dx.phi), dx.jrho_v, dx.jrho_r)
        xhat = lg.compose(eta, x_true)
    else:
        eta = lg.GroupElement(lg.so3_exp(dx.phi), dx.jrho_v, dx.jrho_r)
        xhat = lg.compose(x_true, lg.inverse(eta))
    bg_hat = bg_true - dx.db_g
    ba_hat = ba_true - dx.db_a

    omega_true = omega_meas - bg_true
    f_true = f_meas - ba_true
    xd = mech_deriv_ecef_ib(earth, x_true.as_matrix(), omega_true, f_true)
    xhd = mech_deriv_ecef_ib(
        earth, xhat.as_matrix(), omega_meas - bg_hat, f_meas - ba_hat
    )
    x5, xh5 = x_true.as_matrix(), xhat.as_matrix()
    x5i, xh5i = lg.inverse(x_true).as_matrix(), lg.inverse(xhat).as_matrix()
    if conv is RIGHT:
        eta5 = xh5 @ x5i
        etad = xhd @ x5i - eta5 @ xd @ x5i
        sign = -1.0
    else:
        eta5 = xh5i @ x5
        etad = -xh5i @ xhd @ xh5i @ x5 + xh5i @ xd
        sign = 1.0
    r_eta = eta5[0:3, 0:3]
    phi_std = lg.so3_log(r_eta)
    wb = lg.vee(etad[0:3, 0:3] @ r_eta.T)
    phid = np.linalg.solve(lg.gamma(1, phi_std), wb)
    return np.concatenate([sign * phid, etad[0:3, 3], etad[0:3, 4], np.zeros(6)])


class TestFMatrix:
    def test_left_structure_zero_imu(self, xhat, earth):
        f = f_matrix(LEFT, xhat, ImuSample(0.0, np.zeros(3), np.zeros(3)), earth)
        want = np.zeros((15, 15))
        want[6:9, 3:6] = np.eye(3)
        want[0:3, 9:12] = -np.eye(3)
        want[3:6, 12:15] = -np.eye(3)
        np.testing.assert_array_equal(f, want)

    @pytest.mark.parametrize("conv", [RIGHT, LEFT])
    def test_matches_finite_differences(self, conv, xhat, earth, imu):
        bg = np.array([1e-4, -2e-4, 5e-5])
        ba = np.array([1e-3, 2e-3, -1e-3])
        omega_meas = imu.gyro + bg
        f_meas = imu.accel + ba
        f = f_matrix(conv, xhat, imu, earth)
        eps = 1e-6
        fd = np.zeros((15, 15))
        for j in range(15):
            e = np.zeros(15)
            e[j] = eps
            plus = exact_error_rate(conv, earth, xhat, bg, ba, omega_meas, f_meas, e)
            minus = exact_error_rate(conv, earth, xhat, bg, ba, omega_meas, f_meas, -e)
            fd[:, j] = (plus - minus) / (2 * eps)
        rel = np.abs(f - fd).max() / np.abs(f).max()
        assert rel <= 1e-5

    def test_left_state_independent(self, earth, imu, rng):
        a = random_element(rng, frame=FrameTag.ECEF_IB)
        c, v_eb, r0 = surface_state(earth)
        b = lg.GroupElement(c, v_eb, r0, FrameTag.ECEF_IB)
        np.testing.assert_array_equal(
            f_matrix(LEFT, a, imu, earth), f_matrix(LEFT, b, imu, earth)
        )

    def test_right_state_dependence_structure(self, xhat, earth, imu):
        f = f_matrix(RIGHT, xhat, imu, earth)
        shifted = lg.GroupElement(
            xhat.rot, xhat.vel + np.array([5.0, 0, 0]), xhat.pos, xhat.frame
        )
        f2 = f_matrix(RIGHT, shifted, imu, earth)
        diff = np.abs(f - f2)
        mask = np.zeros((15, 15), dtype=bool)
        mask[3:6, 9:12] = True  # only the velocity-bias coupling moves
        assert np.abs(diff[~mask]).max() == 0.0
        assert diff[mask].max() > 0.0

    def test_frame_required(self, earth, imu, rng):
        bad = random_element(rng, frame=FrameTag.NED_IB)
        with pytest.raises(lg.FrameMismatch):
            f_matrix(RIGHT, bad, imu, earth)


class TestMirroredVariants:
    """The swapped error definitions give the same linearized dynamics."""

    @pytest.mark.parametrize("conv", [RIGHT, LEFT])
    def test_mirrored_error_same_f(self, conv, xhat, earth, imu):
        # mirrored definitions: eta = X Xhat^-1 (right) / X^-1 Xhat (left),
        # with the whole sign convention mirrored alongside; their exact
        # error flow linearizes to the same F
        bg = np.array([1e-4, -2e-4, 5e-5])
        ba = np.array([1e-3, 2e-3, -1e-3])
        omega_meas = imu.gyro + bg
        f_meas = imu.accel + ba

        def mirrored_rate(dx_vec):
            dx = ErrorState15.from_vector(dx_vec, conv)
            if conv is RIGHT:
                # eta_m = X Xhat^-1, phi = -log(rot(eta_m)) => Xhat = eta_m^-1 X
                eta = lg.GroupElement(lg.so3_exp(-dx.phi), dx.jrho_v, dx.jrho_r)
                xh = lg.compose(lg.inverse(eta), xhat)
            else:
                eta = lg.GroupElement(lg.so3_exp(dx.phi), dx.jrho_v, dx.jrho_r)
                xh = lg.compose(xhat, eta)
            bg_hat = bg + dx.db_g  # mirrored bias error sign
            ba_hat = ba + dx.db_a
            xd = mech_deriv_ecef_ib(earth, xhat.as_matrix(), imu.gyro, imu.accel)
            xhd = mech_deriv_ecef_ib(
                earth, xh.as_matrix(), omega_meas - bg_hat, f_meas - ba_hat
            )
            x5, xh5 = xhat.as_matrix(), xh.as_matrix()
            x5i, xh5i = lg.inverse(xhat).as_matrix(), lg.inverse(xh).as_matrix()
            if conv is RIGHT:
                eta5 = x5 @ xh5i
                etad = xd @ xh5i - eta5 @ xhd @ xh5i
                sign = -1.0
            else:
                eta5 = x5i @ xh5
                etad = -x5i @ xd @ x5i @ xh5 + x5i @ xhd
                sign = 1.0
            r_eta = eta5[0:3, 0:3]
            phi_std = lg.so3_log(r_eta)
            wb = lg.vee(etad[0:3, 0:3] @ r_eta.T)
            phid = np.linalg.solve(lg.gamma(1, phi_std), wb)
            return np.concatenate([sign * phid, etad[0:3, 3], etad[0:3, 4], np.zeros(6)])

        f = f_matrix(conv, xhat, imu, earth)
        eps = 1e-6
        fd = np.zeros((15, 15))
        for j in range(15):
            e = np.zeros(15)
            e[j] = eps
            fd[:, j] = (mirrored_rate(e) - mirrored_rate(-e)) / (2 * eps)
        rel = np.abs(f - fd).max() / np.abs(f).max()
        assert rel <= 1e-5


class TestGMatrix:
    def test_left_constant(self, xhat, earth, rng):
        g = g_matrix(LEFT, xhat)
        want = np.zeros((15, 12))
        want[0:3, 0:3] = -np.eye(3)
        want[3:6, 3:6] = -np.eye(3)
        want[9:12, 6:9] = np.eye(3)
        want[12:15, 9:12] = np.eye(3)
        np.testing.assert_array_equal(g, want)
        other = random_element(rng, frame=FrameTag.ECEF_IB)
        np.testing.assert_array_equal(g_matrix(LEFT, other), g)

    def test_right_position_row(self, xhat):
        g = g_matrix(RIGHT, xhat)
        np.testing.assert_allclose(g[6:9, 0:3], lg.hat(xhat.pos) @ xhat.rot, atol=0)
        assert np.abs(g[6:9, 3:12]).max() == 0.0

    def test_gqg_positive_semidefinite(self, xhat, rng):
        for conv in (RIGHT, LEFT):
            g = g_matrix(conv, xhat)
            noise = NoiseParams(*(rng.uniform(0, 1e-4, 4)))
            q = g @ noise.qc_matrix() @ g.T
            eig = np.linalg.eigvalsh(0.5 * (q + q.T))
            assert eig.min() >= -1e-15 * max(1.0, eig.max())


class TestHMatrix:
    def test_right_zero_lever(self, xhat):
        h = h_matrix(RIGHT, xhat, LeverArm(np.zeros(3)))
        np.testing.assert_array_equal(h[:, 0:3], -lg.hat(xhat.pos))
        np.testing.assert_array_equal(h[:, 6:9], -np.eye(3))
        assert np.abs(h[:, 3:6]).max() == 0.0 and np.abs(h[:, 9:15]).max() == 0.0

    def test_left_zero_lever(self, xhat):
        h = h_matrix(LEFT, xhat, LeverArm(np.zeros(3)))
        np.testing.assert_array_equal(h[:, 6:9], xhat.rot)
        assert np.abs(h[:, 0:6]).max() == 0.0 and np.abs(h[:, 9:15]).max() == 0.0

    @pytest.mark.parametrize("conv", [RIGHT, LEFT])
    def test_matches_finite_differences(self, conv, rng):
        # moderate position scale keeps the FD cancellation benign
        x = lg.GroupElement(
            lg.so3_exp(np.array([0.3, -0.5, 0.2])),
            rng.normal(size=3) * 5,
            rng.normal(size=3) * 1000,
            FrameTag.ECEF_IB,
        )
        lever = LeverArm(np.array([0.4, -0.2, 1.1]))
        y = x.pos + x.rot @ lever.l_b
        h = h_matrix(conv, x, lever)

        def innovation(dx_vec):
            dx = ErrorState15.from_vector(dx_vec, conv)
            xh = (
                lg.compose(lg.GroupElement(lg.so3_exp(-dx.phi), dx.jrho_v, dx.jrho_r), x)
                if conv is RIGHT
                else lg.compose(x, lg.inverse(lg.GroupElement(lg.so3_exp(dx.phi), dx.jrho_v, dx.jrho_r)))
            )
            return y - (xh.pos + xh.rot @ lever.l_b)

        eps = 1e-6
        fd = np.zeros((3, 15))
        for j in range(15):
            e = np.zeros(15)
            e[j] = eps
            fd[:, j] = (innovation(e) - innovation(-e)) / (2 * eps)
        rel = np.abs(h - fd).max() / np.abs(h).max()
        assert rel <= 1e-5
