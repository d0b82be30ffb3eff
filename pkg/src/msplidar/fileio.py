"""Bit-exact file formats: histogram cubes, value maps, point clouds, configs.

Cubes are little-endian binary (.sphc); maps and point clouds are plain text
with self-describing headers.  Floats in text formats are written with
shortest-roundtrip repr, so save-then-load is lossless; tabular CSV output
uses 9 significant digits.  All writers go through write-temp-then-rename.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .core import HistogramCube, SceneGroundTruth
from .errors import ConfigFileError, FileFormatError, InvalidSceneError

MAGIC = b"SPHC"
VERSION = 1

MAP_SEMANTICS = ("depth", "reflectivity", "uncertainty", "mask")


def _atomic_write(path, data: bytes):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# histogram cubes (.sphc)
# ---------------------------------------------------------------------------

def write_cube(cube: HistogramCube, path):
    """Write a cube: magic, version, dims (u32), bin width (f64), u32 counts."""
    counts = cube.counts
    if counts.max(initial=0) >= 1 << 32:
        raise FileFormatError("counts exceed u32 range, cannot serialize")
    header = MAGIC + struct.pack(
        "<5I", VERSION, cube.rows, cube.cols, cube.bins, cube.wavelengths
    ) + struct.pack("<d", cube.bin_width_ps)
    payload = np.ascontiguousarray(counts, dtype="<u4").tobytes()
    _atomic_write(path, header + payload)


def read_cube(path) -> HistogramCube:
    with open(path, "rb") as handle:
        blob = handle.read()
    if len(blob) < 32:
        raise FileFormatError(f"truncated file: {len(blob)} bytes is too short for a header")
    if blob[:4] != MAGIC:
        raise FileFormatError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, rows, cols, bins, wavelengths = struct.unpack("<5I", blob[4:24])
    if version != VERSION:
        raise FileFormatError(f"unsupported version {version}")
    (bin_width_ps,) = struct.unpack("<d", blob[24:32])
    n_entries = rows * cols * bins * wavelengths
    if min(rows, cols, bins, wavelengths) == 0 or n_entries > (1 << 40):
        raise FileFormatError(f"dim overflow: {rows}x{cols}x{bins}x{wavelengths}")
    expected = 32 + 4 * n_entries
    if len(blob) != expected:
        raise FileFormatError(
            f"truncated payload: expected {expected} bytes total, found {len(blob)}"
        )
    counts = np.frombuffer(blob, dtype="<u4", offset=32).reshape(wavelengths, rows, cols, bins)
    return HistogramCube(counts.astype(np.int64), bin_width_ps)


# ---------------------------------------------------------------------------
# value maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MapData:
    """A loaded map: (rows, cols, channels) values with semantic and unit tags."""

    values: np.ndarray
    semantic: str
    unit: str


def write_map(values: np.ndarray, semantic: str, unit: str, path):
    """Write a map: five header lines, then one pixel row per line,
    channels interleaved per pixel.  NaN is legal only for depth semantics."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[:, :, None]
    if values.ndim != 3:
        raise FileFormatError(f"map values must be 2-D or 3-D, got shape {values.shape}")
    if semantic not in MAP_SEMANTICS:
        raise FileFormatError(f"unknown map semantic {semantic!r}")
    if semantic != "depth" and np.any(np.isnan(values)):
        raise FileFormatError(f"NaN values are only allowed in depth maps, not {semantic!r}")
    rows, cols, channels = values.shape
    lines = [
        f"rows {rows}",
        f"cols {cols}",
        f"channels {channels}",
        f"semantic {semantic}",
        f"unit {unit}",
    ]
    flat = values.reshape(rows, cols * channels)
    for r in range(rows):
        lines.append(" ".join(repr(float(v)) for v in flat[r]))
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def read_map(path) -> MapData:
    with open(path, "r", encoding="ascii") as handle:
        lines = [ln.strip() for ln in handle if ln.strip()]
    if len(lines) < 5:
        raise FileFormatError(f"map at {path} is missing its header")
    header = {}
    for ln in lines[:5]:
        key, _, value = ln.partition(" ")
        header[key] = value
    try:
        rows = int(header["rows"])
        cols = int(header["cols"])
        channels = int(header["channels"])
        semantic = header["semantic"]
        unit = header["unit"]
    except (KeyError, ValueError) as exc:
        raise FileFormatError(f"bad map header in {path}: {exc}") from exc
    if semantic not in MAP_SEMANTICS:
        raise FileFormatError(f"unknown map semantic {semantic!r} in {path}")
    if len(lines) != 5 + rows:
        raise FileFormatError(f"map at {path} has {len(lines) - 5} data rows, expected {rows}")
    try:
        data = np.array([[float(v) for v in ln.split()] for ln in lines[5:]])
    except ValueError as exc:
        raise FileFormatError(f"bad value in map {path}: {exc}") from exc
    if data.shape != (rows, cols * channels):
        raise FileFormatError(
            f"map at {path} has {data.shape[1]} values per row, expected {cols * channels}"
        )
    if semantic != "depth" and np.any(np.isnan(data)):
        raise FileFormatError(f"NaN values are only allowed in depth maps ({path})")
    return MapData(values=data.reshape(rows, cols, channels), semantic=semantic, unit=unit)


# ---------------------------------------------------------------------------
# point clouds
# ---------------------------------------------------------------------------

def write_point_cloud(depth, reflectivity, depth_uncertainty, mask, path):
    """ASCII point list: one line per kept pixel with position, depth,
    per-wavelength intensity, and depth uncertainty columns."""
    depth = np.asarray(depth, dtype=np.float64)
    reflectivity = np.asarray(reflectivity, dtype=np.float64)
    unc = np.asarray(depth_uncertainty, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if reflectivity.ndim == 2:
        reflectivity = reflectivity[:, :, None]
    if not (depth.shape == unc.shape == mask.shape == reflectivity.shape[:2]):
        raise FileFormatError(
            f"point cloud inputs disagree: depth {depth.shape}, reflectivity "
            f"{reflectivity.shape}, uncertainty {unc.shape}, mask {mask.shape}"
        )
    n_wav = reflectivity.shape[2]
    rr, cc = np.nonzero(mask)
    cols = ["col", "row", "depth"] + [f"intensity_{k}" for k in range(n_wav)] + ["depth_uncertainty"]
    lines = [
        "# msplidar point cloud",
        "columns " + " ".join(cols),
        f"count {rr.size}",
        f"wavelengths {n_wav}",
        "unit bins",
    ]
    for r, c in zip(rr, cc):
        vals = [float(c), float(r), depth[r, c], *reflectivity[r, c], unc[r, c]]
        lines.append(" ".join(repr(float(v)) for v in vals))
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def read_point_cloud(path):
    """Parse a point cloud back into (points array (N, 3+K+1), wavelengths)."""
    with open(path, "r", encoding="ascii") as handle:
        lines = [ln.strip() for ln in handle if ln.strip()]
    header = {}
    data_lines = []
    for ln in lines:
        if ln.startswith("#"):
            continue
        key = ln.split(" ", 1)[0]
        if key in ("columns", "count", "wavelengths", "unit"):
            header[key] = ln.partition(" ")[2]
        else:
            data_lines.append(ln)
    try:
        count = int(header["count"])
        n_wav = int(header["wavelengths"])
    except (KeyError, ValueError) as exc:
        raise FileFormatError(f"bad point cloud header in {path}: {exc}") from exc
    if len(data_lines) != count:
        raise FileFormatError(f"point cloud {path} has {len(data_lines)} points, header says {count}")
    width = 3 + n_wav + 1
    points = np.zeros((count, width))
    for i, ln in enumerate(data_lines):
        vals = ln.split()
        if len(vals) != width:
            raise FileFormatError(f"point {i} in {path} has {len(vals)} columns, expected {width}")
        points[i] = [float(v) for v in vals]
    return points, n_wav


# ---------------------------------------------------------------------------
# scenes
# ---------------------------------------------------------------------------

def save_scene(scene: SceneGroundTruth, directory):
    os.makedirs(directory, exist_ok=True)
    write_map(scene.depth, "depth", "bins", os.path.join(directory, "depth_ref.map"))
    write_map(scene.reflectivity, "reflectivity", "photons", os.path.join(directory, "reflectivity_ref.map"))
    write_map(scene.mask.astype(np.float64), "mask", "flag", os.path.join(directory, "mask.map"))


def load_scene(directory) -> SceneGroundTruth:
    try:
        depth = read_map(os.path.join(directory, "depth_ref.map")).values[:, :, 0]
        refl = read_map(os.path.join(directory, "reflectivity_ref.map")).values
        mask = read_map(os.path.join(directory, "mask.map")).values[:, :, 0] > 0.5
    except FileNotFoundError as exc:
        raise InvalidSceneError(f"scene directory {directory} is incomplete: {exc}") from exc
    return SceneGroundTruth(depth, refl, mask)


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"must be one of {options}")
        return text

    return parse


def _float_list(text):
    [float(v) for v in text.split(",") if v != ""]
    return text


def _background_spec(text):
    from .simulate import BackgroundShape

    BackgroundShape.parse(text)
    return text


def _background_list(text):
    for part in text.split(","):
        _background_spec(part)
    return text


def _algorithm_list(text):
    for part in text.split(","):
        _choice("prop", "class", "xcorr")(part)
    return text


def _sir_spec(text):
    kind = text.split(":")[0]
    if kind not in ("gaussian", "asymmetric", "file"):
        raise ValueError("must be gaussian:SIGMA, asymmetric:ATTACK:TRAIL, or file:PATH")
    return text


# key -> (parser, default); a parser raising ValueError rejects the value
CONFIG_SCHEMA = {
    # cube geometry
    "rows": (int, 64),
    "cols": (int, 64),
    "bins": (int, 300),
    "wavelengths": (int, 1),
    "bin_width_ps": (float, 20.0),
    "group_velocity": (float, 299792458.0),
    # scene
    "scene": (_choice("two_plane", "staircase", "from_files"), "two_plane"),
    "scene_depths": (_float_list, "100,200"),
    "scene_reflectivities": (_float_list, "1.0,0.5"),
    "scene_start": (float, 50.0),
    "scene_step": (float, 10.0),
    "scene_run": (int, 8),
    "scene_empty_border": (int, 4),
    "scene_dir": (str, ""),
    # impulse response
    "sir": (_sir_spec, "asymmetric:3:26"),
    # simulation levels
    "sbr": (float, 1.0),
    "ppp": (float, 10.0),
    "background": (_background_spec, "uniform"),
    "seed": (int, 0),
    # scales
    "scales": (int, 3),
    "scale_windows": (_float_list, "1,3,9"),
    "neighborhood": (int, 3),
    "guide_window": (int, 3),
    # guidance
    "zeta": (float, 9.0),
    "eta_floor": (float, 0.1),
    "guide_depth": (_choice("gd1", "gd2", "external"), "gd1"),
    "guide_intensity": (_choice("gi1", "external"), "gi1"),
    "gd1_min_agree": (int, 3),
    "gd2_k": (int, 8),
    "gd2_std_mult": (float, 1.0),
    "guide_depth_path": (str, ""),
    "guide_intensity_path": (str, ""),
    # solver
    "alpha_d": (float, 1e-3),
    "beta_d": (float, 1e-3),
    "alpha_r": (float, 1e-3),
    "beta_r": (float, 1e-3),
    "max_iters": (int, 50),
    "xi": (float, 1e-3),
    "eps_floor": (float, 1e-6),
    "psi_floor": (float, 1e-9),
    "shape_convention": (_choice("as_printed", "conjugate"), "as_printed"),
    "eps_power": (int, 1),
    # signal extraction
    "signal_significance": (float, 2.5),
    # evaluation / orchestration
    "algorithm": (_choice("prop", "class", "xcorr"), "prop"),
    "taus": (_float_list, "1,2,5,10,20"),
    "threads": (int, 1),
    # sweep grids
    "sweep_sbr": (_float_list, "0.1,1"),
    "sweep_ppp": (_float_list, "10,100"),
    "sweep_backgrounds": (_background_list, "uniform"),
    "sweep_seeds": (_float_list, "0"),
    "sweep_algorithms": (_algorithm_list, "prop,xcorr,class"),
}


@dataclass(frozen=True)
class RunConfig:
    """Validated key=value configuration; every key has a documented default."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def float_list(self, key):
        return [float(v) for v in str(self.values[key]).split(",") if v != ""]

    def int_list(self, key):
        return [int(float(v)) for v in str(self.values[key]).split(",") if v != ""]

    def str_list(self, key):
        return [v for v in str(self.values[key]).split(",") if v != ""]

    def override(self, **kwargs) -> "RunConfig":
        """Copy with CLI-style overrides applied through the same validation."""
        merged = dict(self.values)
        for key, value in kwargs.items():
            if value is None:
                continue
            if key not in CONFIG_SCHEMA:
                raise ConfigFileError(f"unknown config key {key!r}")
            parser = CONFIG_SCHEMA[key][0]
            try:
                if isinstance(value, str) or parser in (int, float):
                    merged[key] = parser(value)
                else:
                    merged[key] = parser(str(value))
            except (ValueError, TypeError) as exc:
                raise ConfigFileError(f"bad value for {key!r}: {value!r} ({exc})") from exc
        return RunConfig(merged)


def default_config() -> RunConfig:
    return RunConfig({key: default for key, (_, default) in CONFIG_SCHEMA.items()})


def parse_config(text: str) -> RunConfig:
    """Parse key=value text into a full config or raise a named error."""
    values = {key: default for key, (_, default) in CONFIG_SCHEMA.items()}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigFileError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigFileError(f"line {lineno}: unknown key {key!r}")
        parser = CONFIG_SCHEMA[key][0]
        try:
            values[key] = parser(value)
        except ValueError as exc:
            raise ConfigFileError(f"line {lineno}: bad value for {key!r}: {value!r} ({exc})") from exc
    return RunConfig(values)


def read_config(path) -> RunConfig:
    with open(path, "r", encoding="ascii") as handle:
        return parse_config(handle.read())


def format_config(cfg: RunConfig) -> str:
    lines = []
    for key in CONFIG_SCHEMA:
        value = cfg.values[key]
        text = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def write_config(cfg: RunConfig, path):
    _atomic_write(path, format_config(cfg).encode())


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def csv_cell(value) -> str:
    """Fixed-format CSV cell: 9 significant digits for floats."""
    if isinstance(value, float):
        return format(value, ".9g")
    return str(value)


def append_csv_row(path, header: list, row: list):
    """Append one row, writing the header first when the file is new."""
    exists = os.path.exists(path)
    directory = os.path.dirname(os.path.abspath(os.fspath(path)))
    os.makedirs(directory, exist_ok=True)
    with open(path, "a", encoding="ascii") as handle:
        if not exists:
            handle.write(",".join(header) + "\n")
        handle.write(",".join(csv_cell(v) for v in row) + "\n")
        handle.flush()
