import numpy as np

from msplidar import BackgroundShape, ScaleConfig, SimSpec, asymmetric_sir, make_scene, simulate_cube
from msplidar.pipeline import multiscale_estimates, reconstruct


def noisy_setup(seed=1):
    sir = asymmetric_sir(3, 26)
    scene = make_scene("two_plane", 32, 32, 300, 1, depths=(100.0, 200.0), empty_border=4)
    spec = SimSpec(
        scene=scene, sir=sir, bins=300, sbr=0.1, ppp=10.0,
        background=BackgroundShape("gamma", 2.0, 30.0), seed=seed,
    )
    cube, truth = simulate_cube(spec)
    return sir, cube, truth


class TestFrontEnd:
    def test_significance_gate_only_removes_signal(self):
        sir, cube, _ = noisy_setup()
        plain = multiscale_estimates(cube, sir, ScaleConfig(), significance=0.0)
        gated = multiscale_estimates(cube, sir, ScaleConfig(), significance=2.5)
        # depths are computed before the gate and must match
        assert np.array_equal(plain.estimates.d_ml, gated.estimates.d_ml)
        for lvl in range(3):
            zeroed = gated.signal[lvl].sum(axis=(0, 3)) == 0
            kept = ~zeroed
            assert np.array_equal(gated.signal[lvl][:, kept, :], plain.signal[lvl][:, kept, :])
            assert gated.signal[lvl][:, zeroed, :].sum() == 0
        # discarded pixel-scales carry the empty-pixel variance sentinel
        discarded = gated.estimates.r_ml.sum(axis=3) < plain.estimates.r_ml.sum(axis=3)
        assert np.all(np.isinf(gated.estimates.sigma_bar_sq[discarded]))

    def test_normalized_estimates_divide_by_window_area(self):
        sir, cube, _ = noisy_setup()
        front = multiscale_estimates(cube, sir, ScaleConfig())
        norm = front.normalized_estimates
        for lvl, area in enumerate(ScaleConfig().areas):
            assert np.allclose(norm.r_ml[lvl], front.estimates.r_ml[lvl] / area)
        assert np.array_equal(norm.sigma_bar_sq, front.estimates.sigma_bar_sq)

    def test_detected_spans_scales(self):
        sir, cube, _ = noisy_setup()
        rec = reconstruct(cube, sir)
        per_scale = np.stack([s.sum(axis=(0, 3)) > 0 for s in rec.front.signal])
        assert np.array_equal(rec.detected, per_scale.any(axis=0))

    def test_weights_shapes_and_normalization(self):
        sir, cube, _ = noisy_setup()
        rec = reconstruct(cube, sir)
        assert rec.w_field.values.shape == (3, 9, 32 * 32)
        assert rec.v_field.values.shape == (3, 9, 32 * 32, 1)
        assert np.allclose(rec.w_field.row_sums(), 1.0, atol=1e-9)
        assert np.allclose(rec.v_field.row_sums(), 1.0, atol=1e-9)
