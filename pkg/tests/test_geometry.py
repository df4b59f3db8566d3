import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from depthobs.geometry import (
    MotionSample,
    PixelGrid,
    Pose,
    integrate_pose,
    motion_coeffs,
    output_fields,
    pixel_to_direction,
    predicted_flow,
    radial_velocity,
    solid_angle_weight,
    unit_direction,
)

finite = st.floats(-5, 5, allow_nan=False)
vec3 = st.tuples(finite, finite, finite)
zcoord = st.floats(-0.8, 0.8, allow_nan=False)


class TestPixelGrid:
    def test_fov_is_full_angle(self):
        g = PixelGrid.from_fov(640, 480, 50, 40)
        assert g.zbar1 == pytest.approx(math.tan(math.radians(25)))
        assert g.zbar2 == pytest.approx(math.tan(math.radians(20)))
        assert g.zbar1**2 + g.zbar2**2 == pytest.approx(0.35, abs=0.01)

    def test_pixel_centers_span_bounds(self):
        g = PixelGrid.from_fov(5, 4)
        assert g.pixel_coords(0, 0) == pytest.approx((-g.zbar1, -g.zbar2))
        assert g.pixel_coords(4, 3) == pytest.approx((g.zbar1, g.zbar2))
        z1, z2 = g.mesh()
        assert z1.shape == (4, 5)
        # z1 grows with the column, z2 with the row
        assert np.all(np.diff(z1, axis=1) > 0) and np.all(np.diff(z2, axis=0) > 0)

    @pytest.mark.parametrize("w,h", [(1, 5), (5, 1)])
    def test_too_small(self, w, h):
        with pytest.raises(ValueError):
            PixelGrid.from_fov(w, h)

    def test_domain_constraint(self):
        with pytest.raises(ValueError, match="zbar"):
            PixelGrid.from_fov(10, 10, 90, 80)


class TestPixelToDirection:
    def test_center_is_optical_axis(self):
        g = PixelGrid.from_fov(5, 5)
        np.testing.assert_allclose(pixel_to_direction(g, 2, 2), [0, 0, 1], atol=1e-15)

    def test_unit_ray_at_z1_one(self):
        np.testing.assert_allclose(unit_direction(1.0, 0.0), [1 / math.sqrt(2), 0, 1 / math.sqrt(2)])

    def test_out_of_range(self):
        g = PixelGrid.from_fov(5, 5)
        with pytest.raises(IndexError):
            pixel_to_direction(g, 5, 0)
        with pytest.raises(IndexError):
            pixel_to_direction(g, 0, -1)

    def test_all_unit_norm(self):
        g = PixelGrid.from_fov(64, 48)
        n = np.linalg.norm(g.directions(), axis=-1)
        assert np.max(np.abs(n - 1)) < 1e-12


class TestMotionCoeffs:
    def test_center_values(self):
        m = MotionSample(v=(0.3, -0.7, 2.0), omega=(0.5, 1.5, -0.2))
        c = motion_coeffs(0.0, 0.0, m)
        assert (c.f1, c.f2, c.g1, c.g2) == pytest.approx((-1.5, 0.5, -0.3, 0.7))

    def test_pure_pitch(self):
        c = motion_coeffs(0.0, 0.0, MotionSample(omega=(0, 1, 0)))
        assert (c.f1, c.f2, c.g1, c.g2) == pytest.approx((-1, 0, 0, 0))

    def test_forward_motion_on_axis(self):
        c = motion_coeffs(0.0, 0.0, MotionSample(v=(0, 0, 1)))
        assert (c.g1, c.g2) == (0.0, 0.0)

    def test_forward_motion_corner(self):
        c = motion_coeffs(1.0, 1.0, MotionSample(v=(0, 0, 1)))
        assert c.g1 == pytest.approx(math.sqrt(3)) and c.g2 == pytest.approx(math.sqrt(3))

    @given(zcoord, zcoord, vec3, vec3)
    def test_g_is_tangent_projection(self, z1, z2, v, w):
        # g is the pinhole chart image of eta x (eta x v) scaled by rho;
        # checking against the 3-vector formula keeps the chart honest
        m = MotionSample(v, w)
        c = motion_coeffs(z1, z2, m)
        eta = unit_direction(z1, z2)
        rho = math.sqrt(1 + z1**2 + z2**2)
        # dz/dt of a static point at unit inverse depth: dz_a = rho*(eta_3 x_a' - eta_a x_3')
        xdot = -np.asarray(v)  # point velocity relative to the camera, Gamma = 1
        tangential = xdot - eta * (eta @ xdot)
        g_expected = rho * (tangential[:2] - np.array([z1, z2]) * tangential[2])
        assert np.allclose([c.g1, c.g2], g_expected, atol=1e-9)


class TestPredictedFlow:
    def test_gamma_zero_is_rotational(self):
        m = MotionSample((1, 2, 3), (0.1, 0.2, 0.3))
        c = motion_coeffs(0.4, -0.2, m)
        assert predicted_flow(0.4, -0.2, m, 0.0) == pytest.approx((c.f1, c.f2))

    def test_lateral_translation(self):
        v1, v2 = predicted_flow(0.0, 0.0, MotionSample(v=(1, 0, 0)), 1 / 3)
        assert v1 == pytest.approx(-1 / 3) and v2 == 0

    def test_static_camera(self):
        assert predicted_flow(0.3, 0.2, MotionSample(), 0.7) == (0.0, 0.0)

    @given(zcoord, zcoord, vec3, vec3, st.floats(0, 10), st.floats(0, 10))
    def test_affine_in_gamma(self, z1, z2, v, w, g1, g2):
        m = MotionSample(v, w)
        a = np.array(predicted_flow(z1, z2, m, g1))
        b = np.array(predicted_flow(z1, z2, m, g2))
        o = np.array(predicted_flow(z1, z2, m, 0.0))
        s = np.array(predicted_flow(z1, z2, m, g1 + g2))
        np.testing.assert_allclose(a + b - o, s, rtol=1e-12, atol=1e-10)


class TestSolidAngleWeight:
    def test_values(self):
        assert solid_angle_weight(0.0, 0.0) == 1.0
        assert solid_angle_weight(1.0, 1.0) == pytest.approx(3**-1.5)
        assert 3**-1.5 == pytest.approx(0.19245, abs=1e-5)

    def test_grid_identity(self):
        z1, z2 = PixelGrid.from_fov(64, 48).mesh()
        w = solid_angle_weight(z1, z2)
        assert np.max(np.abs(w * (1 + z1**2 + z2**2) ** 1.5 - 1)) < 1e-12

    @given(st.floats(0, 3), st.floats(0, 3))
    def test_decreasing_in_radius(self, r, dr):
        if dr < 1e-6:
            return
        assert solid_angle_weight(r + dr, 0.0) < solid_angle_weight(r, 0.0)

    def test_integrates_to_solid_angle(self):
        # the full pinhole plane covers a hemisphere, 2*pi steradians
        z = np.linspace(-60, 60, 2401)
        z1, z2 = np.meshgrid(z, z)
        total = solid_angle_weight(z1, z2).sum() * (z[1] - z[0]) ** 2
        assert total == pytest.approx(2 * np.pi, rel=0.02)


class TestOutputFields:
    def test_forward_motion_center(self):
        _, g = output_fields(0.0, 0.0, MotionSample(v=(0, 0, 1)))
        assert g == (0.0, 0.0)

    def test_lateral_center(self):
        _, (g1, g2) = output_fields(0.0, 0.0, MotionSample(v=(1, 0, 0)))
        assert (g1, g2) == (-1.0, 0.0)
        assert g1**2 + g2**2 == 1.0

    def test_no_rotation(self):
        (f1, f2), _ = output_fields(0.5, -0.3, MotionSample(v=(1, 2, 3)))
        assert (f1, f2) == (0.0, 0.0)


def test_radial_velocity_is_v_dot_eta():
    m = MotionSample(v=(0.3, -1.2, 0.8))
    z1, z2 = 0.4, -0.25
    assert radial_velocity(z1, z2, m) == pytest.approx(unit_direction(z1, z2) @ m.v)


class TestIntegratePose:
    def test_constant_velocity(self):
        ms = [MotionSample(v=(1, 0, 0), t=k / 60) for k in range(61)]
        poses = integrate_pose(ms, 1 / 60)
        np.testing.assert_allclose(poses[-1].position, [1, 0, 0], atol=1e-12)

    def test_full_turn(self):
        ms = [MotionSample(omega=(0, 0, math.pi), t=k / 60) for k in range(121)]
        q = integrate_pose(ms, 1 / 60)[-1].orientation
        assert min(np.linalg.norm(q - [0, 0, 0, 1]), np.linalg.norm(q + [0, 0, 0, 1])) < 1e-6

    def test_zero_motion(self):
        start = Pose((1.0, 2.0, 3.0), Rotation.from_rotvec([0.1, 0.2, 0.3]).as_quat())
        poses = integrate_pose([MotionSample(t=k) for k in range(5)], 0.1, start)
        for p in poses:
            np.testing.assert_allclose(p.position, start.position)
            np.testing.assert_allclose(p.orientation, start.orientation)

    def test_body_frame_velocity(self):
        # quarter turn about the optical axis: body x maps to reference y
        start = Pose(orientation=Rotation.from_rotvec([0, 0, math.pi / 2]).as_quat())
        ms = [MotionSample(v=(1, 0, 0), t=k / 10) for k in range(11)]
        np.testing.assert_allclose(integrate_pose(ms, 0.1, start)[-1].position, [0, 1, 0], atol=1e-12)

    @settings(max_examples=25)
    @given(vec3)
    def test_unit_quaternions(self, w):
        ms = [MotionSample(omega=w, t=k / 60) for k in range(30)]
        for p in integrate_pose(ms, 1 / 60):
            assert abs(np.linalg.norm(p.orientation) - 1) < 1e-9

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            integrate_pose([MotionSample()], 0.0)


def test_motion_sample_rejects_nan():
    with pytest.raises(ValueError):
        MotionSample(v=(np.nan, 0, 0))


def test_motion_bounds():
    MotionSample(v=(1, 0, 0)).check_bounds(1.0, 1.0)
    with pytest.raises(ValueError):
        MotionSample(omega=(0, 2, 0)).check_bounds(1.0, 1.0)


def test_pose_rejects_non_unit_quaternion():
    with pytest.raises(ValueError):
        Pose(orientation=(0, 0, 0, 1.001))


def _brightness(z1, z2):
    y = np.sin(2 * z1) * np.cos(3 * z2) + z1 * z2**2
    gy1 = 2 * np.cos(2 * z1) * np.cos(3 * z2) + z2**2
    gy2 = -3 * np.sin(2 * z1) * np.sin(3 * z2) + 2 * z1 * z2
    return y, gy1, gy2


@settings(max_examples=30)
@given(vec3, vec3, st.floats(0.1, 2.0))
def test_residual_invariant_under_axis_rotation(v, w, gamma):
    """Quarter turn about the optical axis: (z1, z2) -> (-z2, z1), with omega
    and v rotated alike, leaves y_t + V . grad(y) unchanged."""
    z1, z2 = PixelGrid.from_fov(21, 21, 40, 40).mesh()
    yt = np.cos(z1 + 2 * z2)
    R = Rotation.from_rotvec([0, 0, math.pi / 2])
    _, gy1, gy2 = _brightness(z1, z2)
    V1, V2 = predicted_flow(z1, z2, MotionSample(v, w), gamma)
    r = yt + V1 * gy1 + V2 * gy2
    # rotated configuration evaluated at the rotated pixels
    zr1, zr2 = -z2, z1
    # y'(z') = y(z2', -z1'): chain rule gives the rotated gradient
    _, g1, g2 = _brightness(zr2, -zr1)
    gr1, gr2 = -g2, g1
    Vr1, Vr2 = predicted_flow(zr1, zr2, MotionSample(R.apply(v), R.apply(w)), gamma)
    rr = yt + Vr1 * gr1 + Vr2 * gr2
    np.testing.assert_allclose(rr, r, atol=1e-10)
