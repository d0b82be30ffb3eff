import numpy as np
import pytest

from msplidar import (
    FileFormatError,
    GuidanceConfig,
    InvalidConfigError,
    ScaleConfig,
    depth_weights,
    guide_depth_gd1,
    guide_depth_gd2,
    load_external_guide,
    reflectivity_weights,
)
from msplidar.fileio import write_map
from msplidar.guidance import _normalize
from oracles import depth_weights_oracle, knn_outlier_oracle, reflectivity_weights_oracle

CFG = GuidanceConfig()
SCALES = ScaleConfig()


class TestGd1:
    def test_constant_map_identity(self):
        d = np.full((3, 10, 10), 42.0)
        guides, fallback = guide_depth_gd1(d, CFG)
        assert np.array_equal(guides, d)
        assert not fallback.any()

    def test_impulse_outlier_replaced(self):
        d = np.full((1, 9, 9), 120.0)
        d[0, 4, 4] = 10.0
        guides, _ = guide_depth_gd1(d, CFG)
        assert guides[0, 4, 4] == 120.0
        others = np.ones((9, 9), dtype=bool)
        others[4, 4] = False
        assert np.array_equal(guides[0][others], d[0][others])

    def test_salt_noise_cleanup(self, rng):
        truth = np.full((12, 12), 100.0)
        truth[:, 6:] = 160.0
        d = truth.copy()
        salt = rng.random((12, 12)) < 0.10
        d[salt] = rng.uniform(0, 280, salt.sum())
        guides, _ = guide_depth_gd1(d[None], CFG)
        err = np.abs(guides[0][salt] - truth[salt])
        assert (err <= 2 * CFG.zeta).mean() >= 0.95

    def test_all_invalid_falls_back(self):
        # every neighbor pair differs by at least 50 bins, nothing agrees
        d = 50.0 * np.arange(64, dtype=float).reshape(1, 8, 8)
        guides, fallback = guide_depth_gd1(d, CFG)
        assert fallback[0]
        assert np.array_equal(guides[0], d[0])

    def test_coarse_to_fine_rejects_false_fine_surface(self):
        # a coherent fine-scale blob far from the coarse consensus is
        # overwritten; fine detail within tolerance of the coarse map stays
        fine = np.full((10, 10), 30.0)
        coarse = np.full((10, 10), 200.0)
        guides, _ = guide_depth_gd1(np.stack([fine, coarse]), CFG)
        assert np.all(guides[0] == 200.0)
        fine_ok = np.full((10, 10), 195.0)
        guides, _ = guide_depth_gd1(np.stack([fine_ok, coarse]), CFG)
        assert np.all(guides[0] == 195.0)


class TestGd2:
    def test_constant_map_no_outliers(self):
        d = np.full((1, 10, 10), 55.0)
        guides, outliers = guide_depth_gd2(d, CFG)
        assert not outliers.any()
        assert np.array_equal(guides, d)

    def test_far_impulse_flagged(self):
        d = np.full((1, 10, 10), 55.0)
        d[0, 5, 5] = 900.0
        _, outliers = guide_depth_gd2(d, CFG)
        assert outliers[0, 5, 5]
        assert outliers.sum() == 1

    def test_matches_bruteforce_knn(self, rng):
        from msplidar.grid import reflect_index

        d = np.full((8, 8), 60.0)
        noisy = rng.random((8, 8)) < 0.15
        d[noisy] = rng.uniform(0, 250, noisy.sum())
        _, outliers = guide_depth_gd2(d[None], CFG)
        # rebuild the padded candidate set independently
        margin = int(np.ceil(np.sqrt(CFG.gd2_k + 1))) // 2 + 1
        pts, inner = [], []
        for r in range(-margin, 8 + margin):
            for c in range(-margin, 8 + margin):
                rr = int(reflect_index(np.array(r), 8))
                cc = int(reflect_index(np.array(c), 8))
                pts.append((c, r, d[rr, cc]))
                inner.append(0 <= r < 8 and 0 <= c < 8)
        want, _ = knn_outlier_oracle(pts, inner, CFG.gd2_k, CFG.gd2_std_mult)
        assert np.array_equal(outliers[0].reshape(-1), want)

    def test_too_few_pixels(self):
        with pytest.raises(InvalidConfigError):
            guide_depth_gd2(np.zeros((1, 2, 2)), CFG)


class TestDepthWeights:
    def test_single_scale_uniform(self):
        d = np.full((1, 6, 6), 80.0)
        w = depth_weights(d, d.copy(), ScaleConfig(windows=(1,)), CFG)
        assert np.allclose(w.values, 1.0 / 9.0)

    def test_far_neighbor_downweighted(self):
        d = np.full((1, 5, 5), 100.0)
        guides = d.copy()
        guides[0, 2, 3] = 100.0 + 8 * 2 * CFG.zeta  # one neighbor far off
        w = depth_weights(d, guides, ScaleConfig(windows=(1,)), CFG)
        n = 2 * 5 + 2
        slot_right = 5  # (0, +1) in row-major slot order
        assert w.values[0, slot_right, n] < np.exp(-5.0) / w.values[0, :, n].sum() * 2

    def test_matches_formula_oracle(self, rng):
        d = rng.uniform(0, 250, (3, 5, 5))
        guides = rng.uniform(0, 250, (3, 5, 5))
        w = depth_weights(d, guides, SCALES, CFG)
        want = depth_weights_oracle(d, guides, CFG.zeta, SCALES.windows)
        assert np.allclose(w.values, want, atol=1e-12)

    def test_rows_sum_to_one(self, rng):
        d = rng.uniform(0, 250, (3, 6, 6))
        w = depth_weights(d, rng.uniform(0, 250, (3, 6, 6)), SCALES, CFG)
        assert np.allclose(w.row_sums(), 1.0, atol=1e-9)
        assert w.values.min() >= 0

    def test_offset_invariance(self, rng):
        d = rng.uniform(50, 150, (3, 5, 5))
        g = rng.uniform(50, 150, (3, 5, 5))
        w0 = depth_weights(d, g, SCALES, CFG)
        w1 = depth_weights(d + 37.0, g + 37.0, SCALES, CFG)
        assert np.allclose(w0.values, w1.values)


class TestReflectivityWeights:
    def test_constant_gives_w(self, rng):
        d = rng.uniform(0, 250, (3, 5, 5))
        w = depth_weights(d, d.copy(), SCALES, CFG)
        r = np.full((3, 5, 5, 2), 4.0)
        v = reflectivity_weights(r, r.copy(), w, SCALES, CFG)
        for k in range(2):
            assert np.allclose(v.values[:, :, :, k], w.values, atol=1e-12)

    def test_one_hot_masking(self):
        d = np.full((1, 4, 4), 10.0)
        w = depth_weights(d, d.copy(), ScaleConfig(windows=(1,)), CFG)
        w_hot = np.zeros_like(w.values)
        w_hot[0, 3, :] = 1.0
        from msplidar.guidance import WeightField

        r = np.random.default_rng(0).uniform(0, 5, (1, 4, 4, 1))
        v = reflectivity_weights(r, r.copy(), WeightField(w_hot, 3), ScaleConfig(windows=(1,)), CFG)
        assert np.allclose(v.values[0, 3, :, 0], 1.0)
        mask = np.ones(9, dtype=bool)
        mask[3] = False
        assert v.values[0, mask].sum() == 0

    def test_matches_formula_oracle(self, rng):
        d = rng.uniform(0, 250, (3, 4, 4))
        w = depth_weights(d, rng.uniform(0, 250, (3, 4, 4)), SCALES, CFG)
        r = rng.uniform(0, 6, (3, 4, 4, 2))
        g = rng.uniform(0, 6, (3, 4, 4, 2))
        v = reflectivity_weights(r, g, w, SCALES, CFG)
        want = reflectivity_weights_oracle(r, g, w.values, CFG.eta_floor, SCALES.windows)
        assert np.allclose(v.values, want, atol=1e-12)

    def test_inherits_zeros_of_w(self, rng):
        d = rng.uniform(0, 250, (3, 4, 4))
        w = depth_weights(d, rng.uniform(0, 250, (3, 4, 4)), SCALES, CFG)
        wv = w.values.copy()
        wv[1, 4, :] = 0.0
        from msplidar.guidance import WeightField

        r = rng.uniform(0, 6, (3, 4, 4, 1))
        v = reflectivity_weights(r, r.copy(), WeightField(wv, 3), SCALES, CFG)
        assert v.values[1, 4].sum() == 0


class TestNormalize:
    def test_zero_mass_uniform_fallback(self):
        raw = np.zeros((2, 9, 4))
        out = _normalize(raw)
        assert np.allclose(out, 1.0 / 18.0)


class TestExternalGuide:
    def test_roundtrip_identity(self, tmp_path, rng):
        d = rng.uniform(0, 250, (3, 5, 5))
        guides, _ = guide_depth_gd1(d, CFG)
        path = tmp_path / "guide.map"
        write_map(np.moveaxis(guides, 0, 2), "depth", "bins", path)
        back = load_external_guide(path, (3, 5, 5), "depth")
        assert np.allclose(back, guides)

    def test_wrong_dims_rejected(self, tmp_path, rng):
        write_map(rng.uniform(0, 1, (4, 4, 2)), "depth", "bins", tmp_path / "g.map")
        with pytest.raises(FileFormatError):
            load_external_guide(tmp_path / "g.map", (3, 5, 5), "depth")

    def test_negative_reflectivity_rejected(self, tmp_path):
        vals = np.ones((4, 4, 2))
        vals[1, 1, 0] = -0.5
        write_map(vals, "reflectivity", "photons", tmp_path / "g.map")
        with pytest.raises(FileFormatError):
            load_external_guide(tmp_path / "g.map", (2, 4, 4, 1), "reflectivity")
