import numpy as np
import pytest

from conftest import centerline_pixels, render_tube
from vesselflow import loss as lss
from vesselflow import match, optim, synth
from vesselflow.field import ScalarField2D
from vesselflow.optim import (OptimConfig, fd_gradient, field_gradients,
                              init_matched_filter, local_loss_at, refine)
from vesselflow.params import VesselParams
from vesselflow.template import make_slices, make_template

T = make_slices(make_template(), 2)


def angle_error_mod_pi(a, b):
    d = np.abs(a - b) % np.pi
    return np.minimum(d, np.pi - d)


def test_config_validation():
    with pytest.raises(ValueError):
        OptimConfig(radii_grid=())
    with pytest.raises(ValueError):
        OptimConfig(radii_grid=(1.0, -2.0))
    with pytest.raises(ValueError):
        OptimConfig(iters=-1)
    with pytest.raises(ValueError):
        OptimConfig(step_r=0.0)
    with pytest.raises(ValueError):
        OptimConfig(fd_h_angle=0.0)


def test_matched_pcc_map_matches_gather_path(rng):
    I = ScalarField2D(rng.random((24, 24)))
    r, angle = 2.3, 0.9
    pad = int(np.ceil(r * T.extent * np.sqrt(2))) + 2
    padded = np.pad(I.data, pad, mode="edge")
    fast = optim.matched_pcc_map(padded, pad, (24, 24), r, angle, T)
    slow = match.pcc_field(I, np.full((24, 24), r), np.full((24, 24), angle), T)
    assert np.abs(fast - slow).max() < 1e-9


def test_init_recovers_tube_radius_and_angle():
    I, _, seg = render_tube(64, 64, 3.0, np.pi / 2)
    vp = init_matched_filter(I, T)
    pts = centerline_pixels(seg, 64, 64)
    assert len(pts) >= 20
    rs = np.array([vp.r[y, x] for x, y in pts])
    phis = np.array([vp.phi[y, x] for x, y in pts])
    assert np.median(np.abs(rs - 3.0) / 3.0) <= 0.15
    assert np.rad2deg(np.median(angle_error_mod_pi(phis, np.pi / 2))) <= 5.0


def test_init_constant_image_tie_break():
    I = ScalarField2D.full(32, 32, 0.5)
    cfg = OptimConfig(radii_grid=(1.0, 2.0, 3.0), angle_grid=(0.1, 0.7, 1.3))
    vp = init_matched_filter(I, T, cfg)
    assert np.all(vp.r == 1.0)
    assert np.all(vp.phi == 0.1)
    assert np.all(vp.theta1 == 0.0)
    assert np.all(vp.theta2 == 0.0)


def test_init_two_radius_classes():
    # off-lattice centers avoid the aliasing of perfectly row-aligned tubes
    seg_a = synth.Segment(-10.0, 16.3, 74.0, 16.3, 2.0)
    seg_b = synth.Segment(-10.0, 47.6, 74.0, 47.6, 5.0)
    image, _ = synth.render_segments([seg_a, seg_b], 64, 64, 0.8)
    cfg = OptimConfig(radii_grid=tuple(np.geomspace(0.8, 8.0, 12)))
    vp = init_matched_filter(image, T, cfg)
    thin = np.median(vp.r[16, 8:56])
    thick = np.median(vp.r[48, 8:56])
    assert 2.0 <= thick / thin <= 3.0


def test_init_deterministic():
    I, _, _ = render_tube(48, 48, 2.5, 0.3)
    a = init_matched_filter(I, T)
    b = init_matched_filter(I, T)
    assert np.array_equal(a.r, b.r)
    assert np.array_equal(a.phi, b.phi)


def test_fd_gradient_independent_loss_is_zero():
    vp = VesselParams.zeros(8, 8)
    grads = fd_gradient(lambda q: 1.25, vp, (3, 3))
    assert grads == (0.0, 0.0, 0.0, 0.0)


def test_fd_gradient_quadratic_exact():
    vp = VesselParams.zeros(8, 8, r_max=20.0)
    vp.r[2, 5] = 4.0
    grads = fd_gradient(lambda q: (q.r[2, 5] - 3.0) ** 2, vp, (5, 2))
    assert grads[0] == pytest.approx(2.0, abs=1e-6)


def test_fd_gradient_three_pixel_flow_toy():
    # pixels (0..2, all rows) carry angles (0, delta, 0); walking along +x with
    # r = 0.5 and 8 intervals splits the samples 4/5 and 5/4 around the
    # half-pixel lookup boundary, so the discretized loss is
    # L(delta) = -(2 + cos delta) / 3 and dL/d(delta) = sin(delta) / 3
    delta = 0.35
    vp = VesselParams.zeros(3, 1, r_min=0.5, r_max=2.0)
    vp.r[:, :] = 0.5
    vp.phi[0, 1] = delta
    cfg = lss.LossConfig(path_steps=8)
    loss_fn = lambda q: lss.loss_flow(q, cfg)
    analytic = np.sin(delta) / 3.0
    assert lss.loss_flow(vp, cfg) == pytest.approx(-(2.0 + np.cos(delta)) / 3.0, abs=1e-12)
    grads = fd_gradient(loss_fn, vp, (1, 0))
    assert grads[1] == pytest.approx(analytic, abs=1e-4)


def test_field_gradients_match_per_pixel_fd(rng):
    I = ScalarField2D(rng.random((12, 12)))
    vp = VesselParams.zeros(12, 12)
    vp.r[:, :] = rng.uniform(1.0, 1.5, (12, 12))
    vp.phi[:, :] = rng.uniform(-2.0, 2.0, (12, 12))
    vp.theta1[:, :] = rng.uniform(0.0, 0.8, (12, 12))
    vp.theta2[:, :] = rng.uniform(-0.8, 0.0, (12, 12))
    lcfg = lss.LossConfig(lambda1=0.8, lambda2=1.2, lambda3=0.6)
    ocfg = OptimConfig()
    v_frozen = match.vesselness_field(I, vp, T)
    g_r, g_phi, g_t1, g_t2 = field_gradients(I, v_frozen, vp, T, lcfg, ocfg)
    for p in [(4, 4), (7, 2), (2, 9)]:
        loss_fn = lambda q: local_loss_at(I, v_frozen, q, T, lcfg, p)
        gr, gp, g1, g2 = fd_gradient(loss_fn, vp, p, ocfg)
        x, y = p
        assert g_r[y, x] == pytest.approx(gr, abs=1e-9)
        assert g_phi[y, x] == pytest.approx(gp, abs=1e-9)
        assert g_t1[y, x] == pytest.approx(g1, abs=1e-9)
        assert g_t2[y, x] == pytest.approx(g2, abs=1e-9)


def test_refine_zero_iters_identity():
    I, _, _ = render_tube(32, 32, 2.0, 0.0)
    vp = init_matched_filter(I, T)
    out, reports = refine(I, vp, T, lss.LossConfig(), OptimConfig(iters=0))
    assert reports == []
    assert np.array_equal(out.r, vp.r)
    assert np.array_equal(out.phi, vp.phi)


def test_refine_descends_three_pixel_toy():
    # constant image: only the flow term is active, its minimum is -1
    I = ScalarField2D.full(3, 3, 0.5)
    vp = VesselParams.zeros(3, 3, r_min=0.5, r_max=2.0)
    vp.r[:, :] = 0.5
    vp.phi[:, 1] = 0.6
    cfg = lss.LossConfig(path_steps=8)
    out, reports = refine(I, vp, T, cfg, OptimConfig(iters=100, step_angle=0.5))
    assert reports[-1].total <= -1.0 + 1e-3
    assert lss.loss_flow(out, cfg) <= -1.0 + 1e-3


def test_refine_stays_in_bounds(rng):
    I = ScalarField2D(rng.random((16, 16)))
    vp = VesselParams.zeros(16, 16)
    vp.r[:, :] = rng.uniform(vp.r_min, vp.r_max, (16, 16))
    vp.phi[:, :] = rng.uniform(-np.pi, np.pi, (16, 16))
    out, _ = refine(I, vp, T, lss.LossConfig(), OptimConfig(iters=3, step_r=5.0,
                                                            step_angle=5.0))
    out.validate()
    assert out.r.min() >= out.r_min
    assert out.r.max() <= out.r_max
    assert out.theta1.min() >= 0.0
    assert out.theta2.max() <= 0.0


def test_refine_total_non_increasing_with_frozen_snapshot():
    # lambda3 = 0 removes the only dependence on the recomputed snapshot, so
    # the accepted totals must never increase across iterations
    I, _, _ = render_tube(40, 40, 2.5, 0.7)
    vp = init_matched_filter(I, T)
    vp.phi += 0.3  # perturb so there is room to descend
    cfg = lss.LossConfig(lambda3=0.0)
    _, reports = refine(I, vp, T, cfg, OptimConfig(iters=6, step_r=0.3, step_angle=0.3))
    totals = [r.total for r in reports]
    for a, b in zip(totals, totals[1:]):
        assert b <= a + 1e-12


def test_refine_near_ground_truth_is_stable():
    # halo pixels keep descending (their "ground truth" is undefined), so
    # stability is asserted where ground truth exists: the centerline
    # parameters barely move over 20 iterations
    I, _, seg = render_tube(48, 48, 3.0, np.deg2rad(40.0))
    vp = VesselParams.zeros(48, 48)
    vp.r[:, :] = 3.0
    vp.phi[:, :] = np.deg2rad(40.0)
    out, reports = refine(I, vp, T, lss.LossConfig(), OptimConfig(iters=20))
    assert len(reports) == 20
    pts = centerline_pixels(seg, 48, 48)
    rs = np.array([out.r[y, x] for x, y in pts])
    errs = angle_error_mod_pi(np.array([out.phi[y, x] for x, y in pts]),
                              np.deg2rad(40.0))
    assert np.median(np.abs(rs - 3.0) / 3.0) <= 0.05
    assert np.rad2deg(np.median(errs)) <= 2.0


def test_refine_recovers_perturbed_angles():
    I, mask, seg = render_tube(64, 64, 3.0, np.deg2rad(30.0))
    vp = VesselParams.zeros(64, 64)
    vp.r[:, :] = 3.0
    vp.phi[:, :] = np.deg2rad(30.0)
    vp.phi[mask] += np.deg2rad(20.0)
    out, _ = refine(I, vp, T, lss.LossConfig(),
                    OptimConfig(iters=16, step_r=0.3, step_angle=0.45))
    pts = centerline_pixels(seg, 64, 64)
    errs = [angle_error_mod_pi(out.phi[y, x], np.deg2rad(30.0)) for x, y in pts]
    assert np.rad2deg(np.median(errs)) < 8.0


def test_default_grids_resolve():
    from vesselflow.optim import resolve_grids
    radii, angles = resolve_grids(OptimConfig(), 0.8, 8.0)
    assert len(radii) == 8
    assert radii[0] == pytest.approx(0.8) and radii[-1] == pytest.approx(8.0)
    ratios = radii[1:] / radii[:-1]
    assert np.allclose(ratios, ratios[0])  # log-spaced
    assert len(angles) == 12
    assert angles[0] == 0.0 and angles[-1] < np.pi
