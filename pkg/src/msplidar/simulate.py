"""Poisson histogram-cube simulator with prescribed SBR/PPP levels.

A ground-truth scene plus an impulse response define per-(pixel, bin,
wavelength) mean counts
    s[k, n, t] = gain * refl[n, k] * f_k(t - depth[n]) + b[n, t, k]
and the observed cube is an independent Poisson draw per entry.  The signal
gain and the background field are solved in closed form so that the scene
hits an exact signal-to-background ratio (SBR) and an exact combined
photons-per-pixel budget (PPP) at the mean level.

Sampling is reproducible regardless of how work is scheduled: every pixel
owns a counter-derived Philox stream keyed on the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import HistogramCube, ImpulseResponse, SceneGroundTruth
from .errors import InvalidConfigError, InvalidSceneError


@dataclass(frozen=True)
class BackgroundShape:
    """Temporal shape of the background: uniform over bins, or gamma-shaped.

    The gamma shape models scattering media: per-bin weight proportional to
    the gamma(alpha, beta) density evaluated at bin centers t + 0.5.  The
    shape is deterministic; only its per-pixel total is set by calibration.
    """

    kind: str = "uniform"
    alpha: float = 2.0
    beta: float = 30.0

    def __post_init__(self):
        if self.kind not in ("uniform", "gamma"):
            raise InvalidConfigError(f"unknown background kind {self.kind!r}")
        if self.kind == "gamma" and (self.alpha <= 0 or self.beta <= 0):
            raise InvalidConfigError("gamma background needs alpha > 0 and beta > 0")

    def bin_profile(self, n_bins: int) -> np.ndarray:
        """Per-bin weights summing to 1."""
        if self.kind == "uniform":
            return np.full(n_bins, 1.0 / n_bins)
        x = np.arange(n_bins) + 0.5
        w = x ** (self.alpha - 1.0) * np.exp(-x / self.beta)
        return w / w.sum()

    @classmethod
    def parse(cls, text: str) -> "BackgroundShape":
        """Parse 'uniform' or 'gamma:A:B'."""
        parts = text.strip().split(":")
        if parts[0] == "uniform" and len(parts) == 1:
            return cls("uniform")
        if parts[0] == "gamma":
            if len(parts) != 3:
                raise InvalidConfigError(f"expected gamma:A:B, got {text!r}")
            try:
                return cls("gamma", float(parts[1]), float(parts[2]))
            except ValueError as exc:
                raise InvalidConfigError(f"bad gamma parameters in {text!r}") from exc
        raise InvalidConfigError(f"unknown background {text!r}")

    def label(self) -> str:
        if self.kind == "uniform":
            return "uniform"
        return f"gamma:{self.alpha:g}:{self.beta:g}"


@dataclass(frozen=True)
class SimSpec:
    """Everything needed to draw one histogram cube."""

    scene: SceneGroundTruth
    sir: ImpulseResponse
    bins: int
    sbr: float
    ppp: float
    background: BackgroundShape = BackgroundShape()
    seed: int = 0
    bin_width_ps: float = 20.0

    def __post_init__(self):
        if self.sbr <= 0:
            raise InvalidConfigError("sbr must be positive")
        if self.ppp <= 0:
            raise InvalidConfigError("ppp must be positive")
        if self.bins <= 0:
            raise InvalidConfigError("bins must be positive")
        if self.scene.wavelengths != self.sir.n_wavelengths:
            raise InvalidConfigError("scene and SIR wavelength counts differ")


def make_scene(kind: str, rows: int, cols: int, bins: int, wavelengths: int, **params) -> SceneGroundTruth:
    """Procedural ground-truth scenes.

    two_plane: a centered foreground rectangle over a full-frame backdrop at
    two distinct depths with distinct reflectivities; staircase: a monotone
    depth ramp in quantized steps along columns.  from_files loads a scene
    directory written by ``msplidar.fileio.save_scene``.  An optional
    ``empty_border`` strips target presence from a border band, giving the
    detection metrics true-negative pixels to work with.

    All depths are validated against [0, bins-1]; whether the SIR support
    also fits is checked at calibration time, when the SIR is known.
    """
    if kind == "from_files":
        from .fileio import load_scene

        return load_scene(params["scene_dir"])
    if rows <= 0 or cols <= 0 or wavelengths <= 0:
        raise InvalidSceneError("scene dimensions must be positive")

    spectral = 1.0 + np.arange(wavelengths) / (2.0 * wavelengths)
    if kind == "two_plane":
        depths = params.get("depths", (100.0, 200.0))
        refl = params.get("reflectivities", (1.0, 0.5))
        if len(depths) != 2 or len(refl) != 2:
            raise InvalidSceneError("two_plane needs two depths and two reflectivities")
        depth = np.full((rows, cols), float(depths[1]))
        base = np.full((rows, cols), float(refl[1]))
        r0, r1 = rows // 4, rows - rows // 4
        c0, c1 = cols // 4, cols - cols // 4
        depth[r0:r1, c0:c1] = float(depths[0])
        base[r0:r1, c0:c1] = float(refl[0])
    elif kind == "staircase":
        start = float(params.get("start", 50.0))
        step = float(params.get("step", 10.0))
        run = int(params.get("run", max(1, cols // 8)))
        col_depth = start + step * (np.arange(cols) // run)
        depth = np.tile(col_depth, (rows, 1))
        base = np.ones((rows, cols))
    else:
        raise InvalidSceneError(f"unknown scene kind {kind!r}")

    if depth.min() < 0 or depth.max() > bins - 1:
        raise InvalidSceneError(
            f"scene depths [{depth.min():g}, {depth.max():g}] fall outside bins [0, {bins - 1}]"
        )
    reflectivity = base[:, :, None] * spectral[None, None, :]
    mask = np.ones((rows, cols), dtype=bool)
    border = int(params.get("empty_border", 0))
    if border > 0:
        inner = np.zeros((rows, cols), dtype=bool)
        inner[border:rows - border, border:cols - border] = True
        mask &= inner
        reflectivity[~mask] = 0.0
        depth[~mask] = np.nan
    return SceneGroundTruth(depth, reflectivity, mask)


def calibrate_levels(scene: SceneGroundTruth, sbr: float, ppp: float, background: BackgroundShape, n_bins: int):
    """Solve the signal gain and per-bin background level for exact SBR and PPP.

    With S the total expected signal photons and B the total expected
    background photons over the scene, S/B = sbr and (S+B)/N = ppp.  The
    background total splits evenly over pixels and wavelengths, then over
    bins by the shape profile.  Returns (gain, bg_bin) where bg_bin[t] is the
    background mean of every (pixel, wavelength) at bin t.
    """
    ref_total = float(scene.reflectivity.sum())
    if ref_total <= 0:
        raise InvalidSceneError("scene has zero total reflectivity, cannot set SBR")
    n_pix = scene.mask.size
    n_wav = scene.wavelengths
    total_background = n_pix * ppp / (1.0 + sbr)
    total_signal = n_pix * ppp * sbr / (1.0 + sbr)
    gain = total_signal / ref_total
    per_pixel_wav = total_background / (n_pix * n_wav)
    bg_bin = per_pixel_wav * background.bin_profile(n_bins)
    return gain, bg_bin


def mean_cube(spec: SimSpec):
    """Per-entry Poisson means (K, rows, cols, T) and the calibration gain.

    Raises InvalidSceneError when a target depth would push the SIR support
    outside the histogram window.
    """
    scene = spec.scene
    sir = spec.sir
    rows, cols = scene.mask.shape
    n_wav = scene.wavelengths
    n_bins = spec.bins
    gain, bg_bin = calibrate_levels(scene, spec.sbr, spec.ppp, spec.background, n_bins)
    means = np.broadcast_to(bg_bin, (n_wav, rows, cols, n_bins)).copy()

    depth = scene.depth
    target = scene.mask & (scene.reflectivity.sum(axis=2) > 0)
    depths = np.unique(depth[target]) if target.any() else []
    for k in range(n_wav):
        f = sir.samples[k]
        po = int(sir.peak_offset[k])
        for d in depths:
            lo = int(round(d)) - po
            hi = lo + f.size
            if lo < 0 or hi > n_bins:
                raise InvalidSceneError(
                    f"depth {d:g} leaves no room for the SIR support "
                    f"(bins [{lo}, {hi}) outside [0, {n_bins}))"
                )
            sel = target & (depth == d)
            amp = gain * scene.reflectivity[:, :, k][sel]
            means[k, :, :, lo:hi][sel] += amp[:, None] * f[None, :]
    return means, gain


def sample_histograms(spec: SimSpec) -> HistogramCube:
    """Draw the Poisson cube for a simulation spec.

    Each pixel consumes its own Philox stream (key = seed, counter = pixel
    index shifted into the high counter words), so the result is bit-identical
    for a fixed seed no matter how pixels are chunked or parallelized.
    numpy's Poisson sampler is exact: inversion for small means, transformed
    rejection (no normal approximation) above.
    """
    means, _ = mean_cube(spec)
    n_wav, rows, cols, n_bins = means.shape
    n_pix = rows * cols
    flat = means.reshape(n_wav, n_pix, n_bins)
    counts = np.empty((n_wav, n_pix, n_bins), dtype=np.int64)
    key = int(spec.seed) % (1 << 64)
    for n in range(n_pix):
        rng = np.random.Generator(np.random.Philox(key=key, counter=n << 128))
        counts[:, n, :] = rng.poisson(flat[:, n, :])
    return HistogramCube(counts.reshape(n_wav, rows, cols, n_bins), spec.bin_width_ps)


def simulate_cube(spec: SimSpec):
    """Sample a cube and return it with the gain-calibrated ground truth.

    The returned scene carries reflectivity in expected signal photons, the
    unit reconstruction estimates live in, so error metrics compare like
    units.
    """
    cube = sample_histograms(spec)
    _, gain = mean_cube(spec)
    return cube, spec.scene.scaled(gain)
