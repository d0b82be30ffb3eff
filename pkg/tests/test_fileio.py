import numpy as np
import pytest

from msplidar import ConfigFileError, FileFormatError, HistogramCube
from msplidar.fileio import (
    csv_cell,
    default_config,
    format_config,
    parse_config,
    read_cube,
    read_map,
    read_point_cloud,
    write_cube,
    write_map,
    write_point_cloud,
)


class TestCubeFormat:
    def test_roundtrip_random(self, rng, tmp_path):
        for i in range(20):
            shape = rng.integers(1, 5, 4)
            counts = rng.integers(0, 1000, (shape[0], shape[1], shape[2], shape[3])).astype(np.int64)
            cube = HistogramCube(counts, bin_width_ps=float(rng.uniform(1, 50)))
            path = tmp_path / f"c{i}.sphc"
            write_cube(cube, path)
            back = read_cube(path)
            assert np.array_equal(back.counts, cube.counts)
            assert back.bin_width_ps == cube.bin_width_ps

    def test_bad_magic(self, rng, tmp_path):
        path = tmp_path / "c.sphc"
        write_cube(HistogramCube(np.ones((1, 2, 2, 3), dtype=np.int64)), path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(FileFormatError, match="magic"):
            read_cube(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "c.sphc"
        write_cube(HistogramCube(np.ones((1, 2, 2, 3), dtype=np.int64)), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-5])
        with pytest.raises(FileFormatError, match="expected"):
            read_cube(path)

    def test_counts_over_u32_rejected(self, tmp_path):
        cube = HistogramCube(np.full((1, 1, 1, 1), 1 << 33, dtype=np.int64))
        with pytest.raises(FileFormatError):
            write_cube(cube, tmp_path / "c.sphc")


class TestMapFormat:
    def test_roundtrip_random(self, rng, tmp_path):
        for i in range(20):
            rows, cols, chans = rng.integers(1, 6, 3)
            vals = rng.standard_normal((rows, cols, chans)) * rng.uniform(0.01, 1e6)
            write_map(vals, "reflectivity", "photons", tmp_path / f"m{i}.map")
            back = read_map(tmp_path / f"m{i}.map")
            assert np.array_equal(back.values, vals)  # bit-exact via repr
            assert back.semantic == "reflectivity"

    def test_nan_allowed_only_for_depth(self, tmp_path):
        vals = np.array([[1.0, np.nan]])
        write_map(vals, "depth", "bins", tmp_path / "d.map")
        back = read_map(tmp_path / "d.map")
        assert np.isnan(back.values[0, 1, 0])
        with pytest.raises(FileFormatError):
            write_map(vals, "reflectivity", "photons", tmp_path / "r.map")

    def test_value_count_checked(self, tmp_path):
        write_map(np.ones((2, 2)), "mask", "flag", tmp_path / "m.map")
        text = (tmp_path / "m.map").read_text().splitlines()
        text[5] = "1.0"  # drop a value
        (tmp_path / "m.map").write_text("\n".join(text) + "\n")
        with pytest.raises(FileFormatError):
            read_map(tmp_path / "m.map")

    def test_unknown_semantic(self, tmp_path):
        with pytest.raises(FileFormatError):
            write_map(np.ones((2, 2)), "velocity", "m/s", tmp_path / "m.map")


class TestPointCloud:
    def test_all_masked_header_only(self, tmp_path):
        path = tmp_path / "p.xyz"
        write_point_cloud(
            np.zeros((2, 2)), np.zeros((2, 2, 1)), np.zeros((2, 2)), np.zeros((2, 2), bool), path
        )
        pts, n_wav = read_point_cloud(path)
        assert pts.shape == (0, 5)

    def test_known_values(self, tmp_path):
        depth = np.array([[10.0, 20.0], [30.0, 40.0]])
        refl = np.arange(8, dtype=float).reshape(2, 2, 2)
        unc = np.array([[0.1, 0.2], [0.3, 0.4]])
        mask = np.ones((2, 2), bool)
        path = tmp_path / "p.xyz"
        write_point_cloud(depth, refl, unc, mask, path)
        pts, n_wav = read_point_cloud(path)
        assert n_wav == 2 and pts.shape == (4, 6)
        row = pts[1]  # pixel (0, 1): col=1, row=0
        assert list(row) == [1.0, 0.0, 20.0, 2.0, 3.0, 0.2]

    def test_roundtrip_random(self, rng, tmp_path):
        for i in range(20):
            rows, cols = rng.integers(1, 6, 2)
            n_wav = int(rng.integers(1, 4))
            depth = rng.uniform(0, 300, (rows, cols))
            refl = rng.uniform(0, 50, (rows, cols, n_wav))
            unc = rng.uniform(0, 3, (rows, cols))
            mask = rng.random((rows, cols)) < 0.7
            path = tmp_path / f"p{i}.xyz"
            write_point_cloud(depth, refl, unc, mask, path)
            pts, k = read_point_cloud(path)
            assert k == n_wav and pts.shape == (mask.sum(), 3 + n_wav + 1)
            rr, cc = np.nonzero(mask)
            for j, (r, c) in enumerate(zip(rr, cc)):
                assert pts[j, 2] == depth[r, c]
                assert np.array_equal(pts[j, 3 : 3 + n_wav], refl[r, c])

    def test_dim_mismatch(self, tmp_path):
        with pytest.raises(FileFormatError):
            write_point_cloud(
                np.zeros((2, 2)), np.zeros((3, 2, 1)), np.zeros((2, 2)), np.ones((2, 2), bool),
                tmp_path / "p.xyz",
            )


class TestRunConfig:
    def test_defaults_complete(self):
        cfg = default_config()
        assert cfg["zeta"] == 9.0
        assert cfg["scale_windows"] == "1,3,9"
        assert cfg["shape_convention"] == "as_printed"

    def test_roundtrip(self, rng):
        cfg = default_config().override(
            zeta=7.5, sbr=0.31622776601683794, scene="staircase", seed=987654321
        )
        back = parse_config(format_config(cfg))
        assert back.values == cfg.values

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigFileError, match="unknown key"):
            parse_config("zeta = 9\nwarp_factor = 5\n")

    def test_bad_value_named(self):
        with pytest.raises(ConfigFileError, match="shape_convention"):
            parse_config("shape_convention = exotic\n")
        with pytest.raises(ConfigFileError, match="ppp"):
            parse_config("ppp = fast\n")

    def test_comments_and_blanks(self):
        cfg = parse_config("# a comment\n\nzeta = 4.0\n")
        assert cfg["zeta"] == 4.0

    def test_malformed_line(self):
        with pytest.raises(ConfigFileError, match="key=value"):
            parse_config("zeta 4.0\n")

    def test_roundtrip_random_floats(self, rng):
        for _ in range(100):
            cfg = default_config().override(
                zeta=float(rng.uniform(0.1, 50)),
                sbr=float(10 ** rng.uniform(-2, 2)),
                ppp=float(10 ** rng.uniform(-1, 3)),
                beta_d=float(10 ** rng.uniform(-6, 0)),
            )
            back = parse_config(format_config(cfg))
            assert back.values == cfg.values


class TestCsvCell:
    def test_nine_significant_digits(self):
        assert csv_cell(1.0 / 3.0) == "0.333333333"
        assert csv_cell(12) == "12"
        assert csv_cell("xcorr") == "xcorr"


class TestCubeHeaderValidation:
    def test_wrong_version(self, tmp_path):
        import struct

        path = tmp_path / "c.sphc"
        write_cube(HistogramCube(np.ones((1, 2, 2, 3), dtype=np.int64)), path)
        blob = bytearray(path.read_bytes())
        blob[4:8] = struct.pack("<I", 9)
        path.write_bytes(bytes(blob))
        with pytest.raises(FileFormatError, match="version"):
            read_cube(path)

    def test_dim_overflow(self, tmp_path):
        import struct

        header = b"SPHC" + struct.pack("<5I", 1, 1 << 20, 1 << 20, 300, 4) + struct.pack("<d", 20.0)
        path = tmp_path / "c.sphc"
        path.write_bytes(header)
        with pytest.raises(FileFormatError, match="dim overflow"):
            read_cube(path)
