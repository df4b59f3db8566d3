import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthobs.flow import (
    DerivativeStack,
    FlowField,
    HsConfig,
    flow_errors,
    horn_schunck,
    hs_cost,
    hs_residual,
    metric_alpha_hs,
    spatial_derivatives,
)
from depthobs.geometry import PixelGrid, predicted_flow
from depthobs.scene import SceneModel, TrajectorySpec, constant_motion, generate_sequence
from depthobs.stencil import horn_schunck_stencil


def random_stack(rng, shape, dt=1 / 60):
    yz1, yz2, yt = rng.normal(size=(3,) + shape) * [[[30.0]], [[20.0]], [[10.0]]]
    return DerivativeStack(yz1, yz2, yt, dt)


class TestSpatialDerivatives:
    def test_constant_frames(self):
        g = PixelGrid.from_fov(20, 15)
        s = spatial_derivatives(np.full(g.shape, 90.0), np.full(g.shape, 90.0), g, 1 / 60)
        for a in (s.yz1, s.yz2, s.yt):
            assert np.max(np.abs(a)) < 1e-9

    @pytest.mark.parametrize("presmooth", [0.0, 1.5])
    def test_linear_ramp(self, presmooth):
        g = PixelGrid.from_fov(40, 30)
        z1, _ = g.mesh()
        y = 50 + 200 * z1
        s = spatial_derivatives(y, y, g, 1 / 60, presmooth)
        inner = (slice(1, -1), slice(1, -1)) if presmooth == 0 else (slice(8, -8), slice(8, -8))
        np.testing.assert_allclose(s.yz1[inner], 200, atol=1e-9)
        assert np.max(np.abs(s.yz2)) < 1e-9 and np.max(np.abs(s.yt)) == 0

    def test_temporal_step(self):
        g = PixelGrid.from_fov(20, 15)
        a = np.random.default_rng(0).uniform(1, 256, g.shape)
        s = spatial_derivatives(a, a + 5, g, 1 / 60)
        np.testing.assert_allclose(s.yt, 300.0, rtol=1e-12)

    def test_size_mismatch(self):
        g = PixelGrid.from_fov(20, 15)
        with pytest.raises(ValueError):
            spatial_derivatives(np.zeros(g.shape), np.zeros((15, 19)), g, 1 / 60)

    def test_bad_dt(self):
        g = PixelGrid.from_fov(4, 4)
        with pytest.raises(ValueError):
            spatial_derivatives(np.zeros(g.shape), np.zeros(g.shape), g, 0.0)


class TestHsCost:
    def test_zero(self):
        g = PixelGrid.from_fov(8, 8)
        z = np.zeros(g.shape)
        assert hs_cost(FlowField(z, z), DerivativeStack(z, z, z, 1.0), 5.0, g) == 0.0

    def test_constant_flow_temporal_only(self):
        g = PixelGrid.from_fov(8, 6)
        z = np.zeros(g.shape)
        W = FlowField(np.full(g.shape, 0.4), np.full(g.shape, -1.1))
        cost = hs_cost(W, DerivativeStack(z, z, np.full(g.shape, 7.0), 1.0), 5.0, g)
        area = g.cell_area * g.width * g.height
        assert cost == pytest.approx(area * 49.0)

    @pytest.mark.parametrize("units", ["lattice", "metric"])
    def test_gradient_matches_residual(self, rng, units):
        g = PixelGrid.from_fov(8, 8)
        stack = random_stack(rng, g.shape)
        flow = FlowField(*rng.normal(size=(2,) + g.shape))
        alpha = 5.0 if units == "lattice" else 40.0
        am = metric_alpha_hs(alpha, g, units)
        r1, r2 = hs_residual(flow, stack, am, horn_schunck_stencil(g))
        analytic = 2 * g.cell_area * np.stack([r1, r2])
        h = 1e-6
        num = np.zeros_like(analytic)
        for c in range(2):
            for idx in np.ndindex(g.shape):
                comps = [flow.v1.copy(), flow.v2.copy()]
                comps[c][idx] += h
                up = hs_cost(FlowField(*comps), stack, alpha, g, units)
                comps[c][idx] -= 2 * h
                dn = hs_cost(FlowField(*comps), stack, alpha, g, units)
                num[(c,) + idx] = (up - dn) / (2 * h)
        assert np.max(np.abs(num - analytic)) / np.max(np.abs(analytic)) < 1e-6


class TestHornSchunck:
    def test_zero_is_fixed_point(self):
        g = PixelGrid.from_fov(20, 15)
        rng = np.random.default_rng(1)
        s = DerivativeStack(*rng.normal(size=(2,) + g.shape), np.zeros(g.shape), 1 / 60)
        f = horn_schunck(s, HsConfig(), g)
        assert np.all(f.v1 == 0) and np.all(f.v2 == 0)

    def test_cost_monotone_over_sweeps(self, rng):
        g = PixelGrid.from_fov(24, 18)
        s = random_stack(rng, g.shape)
        cfg = HsConfig(alpha=3.0, iterations=60, tol=0)
        costs = [hs_cost(FlowField.zeros(g.shape), s, cfg.alpha, g)]
        horn_schunck(s, cfg, g, monitor=lambda k, f: costs.append(hs_cost(f, s, cfg.alpha, g)))
        assert np.all(np.diff(costs) <= 1e-12 * costs[0])

    def test_more_iterations_never_worse(self, noiseless_seq):
        seq = noiseless_seq
        s = spatial_derivatives(seq.frames[6], seq.frames[7], seq.grid, seq.dt)
        a = horn_schunck(s, HsConfig(iterations=50, tol=0), seq.grid)
        b = horn_schunck(s, HsConfig(iterations=100, tol=0), seq.grid)
        assert hs_cost(b, s, 20.0, seq.grid) <= hs_cost(a, s, 20.0, seq.grid)

    def test_converged_fixed_point_solves_euler_lagrange(self, rng):
        g = PixelGrid.from_fov(12, 10)
        s = random_stack(rng, g.shape)
        cfg = HsConfig(alpha=2.0, iterations=200000, tol=1e-12)
        f = horn_schunck(s, cfg, g)
        lap = horn_schunck_stencil(g)
        r1, r2 = hs_residual(f, s, metric_alpha_hs(cfg.alpha, g), lap)
        assert max(np.max(np.abs(r1)), np.max(np.abs(r2))) < 1e-9 * max(1.0, np.max(np.abs(s.yt * s.yz1)))

    def test_translation_covariance(self):
        rng = np.random.default_rng(5)
        g = PixelGrid.from_fov(64, 48)
        base = np.cumsum(np.cumsum(rng.normal(size=(48, 66)), 0), 1)
        a0, a1 = base[:, 1:-1], base[:, 2:]
        b0, b1 = base[:, :-2], base[:, 1:-1]
        cfg = HsConfig(iterations=10, tol=0)
        fa = horn_schunck(spatial_derivatives(a0, a1, g, 1 / 60), cfg, g)
        fb = horn_schunck(spatial_derivatives(b0, b1, g, 1 / 60), cfg, g)
        band = cfg.iterations + 3
        np.testing.assert_allclose(fb.v1[band:-band, band + 1:-band], fa.v1[band:-band, band:-band - 1], rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(fb.v2[band:-band, band + 1:-band], fa.v2[band:-band, band:-band - 1], rtol=1e-9, atol=1e-9)

    def test_frontoparallel_translation_accuracy(self, desk_grid):
        motions = constant_motion((1.0, 0.0, 0.0), fps=60, n_frames=8)
        seq = generate_sequence(desk_grid, SceneModel(tilt=0.0), TrajectorySpec(n_frames=8), motions=motions)
        z1, z2 = desk_grid.mesh()
        flow = None
        for k in range(7):
            s = spatial_derivatives(seq.frames[k], seq.frames[k + 1], desk_grid, seq.dt)
            flow = horn_schunck(s, HsConfig(), desk_grid, init=flow)
        exact = FlowField(*predicted_flow(z1, z2, motions[0], 2 / (seq.truth_depth[6] + seq.truth_depth[7])))
        assert flow_errors(flow, exact, border=2)["median_rel_error"] < 0.15

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.5, 50))
    def test_stays_finite(self, alpha):
        g = PixelGrid.from_fov(10, 8)
        s = random_stack(np.random.default_rng(2), g.shape)
        f = horn_schunck(s, HsConfig(alpha=alpha, iterations=20), g)
        assert np.all(np.isfinite(f.v1)) and np.all(np.isfinite(f.v2))


def test_config_validation():
    with pytest.raises(ValueError):
        HsConfig(alpha=0)
    with pytest.raises(ValueError):
        HsConfig(iterations=0)
    with pytest.raises(ValueError):
        HsConfig(alpha_units="pixels")


def test_flow_errors_perfect():
    v = FlowField(np.ones((5, 5)), np.zeros((5, 5)))
    e = flow_errors(v, v)
    assert e["median_rel_error"] == 0 and e["mean_epe"] == 0


def test_zero_motion_gives_near_zero_flow(desk_grid):
    ms = constant_motion((0, 0, 0), n_frames=3)
    seq = generate_sequence(desk_grid, SceneModel(), TrajectorySpec(n_frames=3), sigma=1.0, motions=ms)
    s = spatial_derivatives(seq.frames[0], seq.frames[1], desk_grid, seq.dt)
    f = horn_schunck(s, HsConfig(), desk_grid)
    # noise floor: normal-flow uncertainty, temporal-derivative noise over
    # gradient magnitude (box filter averages nine pixel differences)
    yt_noise = seq.noise_sigma * np.sqrt(2) / seq.dt / 3
    floor = yt_noise / np.median(np.hypot(s.yz1, s.yz2))
    assert np.median(np.hypot(f.v1, f.v2)) < floor
