"""Domain types, multi-scale pyramid, and per-scale maximum-likelihood estimators.

The observation is a cube of timing-histogram photon counts y[k, n, t] over
K wavelengths, N pixels, and T time bins.  A target at pixel n contributes
counts shaped like the system impulse response (SIR) of each wavelength,
centered on the target's time-of-flight bin, on top of a background level.

Depth is measured in time bins throughout; conversion to meters happens only
at report time.  The depth convention is peak-position: an estimated depth d
means the SIR peak arrives in bin d.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError, InvalidSceneError, InvalidSirError
from .grid import window_sum

# Matched-filter support floor: log f is evaluated as log(max(f, LOG_FLOOR))
# so every integer shift has a defined score.
LOG_FLOOR = 1e-12
# A single-impulse SIR gets this std (bins) so depth variances stay finite.
SIGMA_FLOOR = 0.5
# Attack/trailing widths span bins with at least this fraction of the SIR peak.
WIDTH_THRESHOLD = 0.01


@dataclass(frozen=True)
class HistogramCube:
    """Photon counts indexed [wavelength, row, col, time bin]."""

    counts: np.ndarray
    bin_width_ps: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 4:
            raise InvalidConfigError(f"counts must be 4-D (K, rows, cols, T), got shape {c.shape}")
        if any(s <= 0 for s in c.shape):
            raise InvalidConfigError(f"all cube dimensions must be positive, got {c.shape}")
        if not np.issubdtype(c.dtype, np.integer):
            raise InvalidConfigError(f"counts must be integers, got dtype {c.dtype}")
        if c.min(initial=0) < 0:
            raise InvalidConfigError("counts must be non-negative")
        if self.bin_width_ps <= 0:
            raise InvalidConfigError("bin_width_ps must be positive")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @property
    def wavelengths(self) -> int:
        return self.counts.shape[0]

    @property
    def rows(self) -> int:
        return self.counts.shape[1]

    @property
    def cols(self) -> int:
        return self.counts.shape[2]

    @property
    def bins(self) -> int:
        return self.counts.shape[3]

    @property
    def n_pixels(self) -> int:
        return self.rows * self.cols

    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ImpulseResponse:
    """Per-wavelength SIR samples (unit sum) with fitted summary statistics.

    sigma is the sample std of the normalized SIR in bins, peak_offset the
    bin of its maximum, attack/trail widths the distance from the peak to the
    first/last bin holding at least 1% of the peak value.
    """

    samples: tuple = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    peak_offset: np.ndarray = field(repr=False)
    attack_width: np.ndarray = field(repr=False)
    trail_width: np.ndarray = field(repr=False)

    @property
    def n_wavelengths(self) -> int:
        return len(self.samples)


def fit_sir(samples_per_wavelength) -> ImpulseResponse:
    """Normalize raw SIR samples and fit the summary statistics.

    Raises InvalidSirError for all-zero or negative input.  A degenerate
    single-impulse SIR gets sigma floored at 0.5 bins.
    """
    norm = []
    sigma = []
    peak = []
    attack = []
    trail = []
    for k, raw in enumerate(samples_per_wavelength):
        f = np.asarray(raw, dtype=np.float64)
        if f.ndim != 1 or f.size == 0:
            raise InvalidSirError(f"wavelength {k}: SIR must be a non-empty 1-D array")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise InvalidSirError(f"wavelength {k}: SIR samples must be finite and non-negative")
        s = f.sum()
        if s <= 0:
            raise InvalidSirError(f"wavelength {k}: SIR is all zero")
        f = f / s
        bins = np.arange(f.size)
        mean = float(np.dot(f, bins))
        var = float(np.dot(f, (bins - mean) ** 2))
        sigma.append(max(np.sqrt(var), SIGMA_FLOOR))
        p = int(np.argmax(f))
        peak.append(p)
        above = np.nonzero(f >= WIDTH_THRESHOLD * f[p])[0]
        attack.append(p - int(above[0]))
        trail.append(int(above[-1]) - p)
        norm.append(f)
    return ImpulseResponse(
        samples=tuple(norm),
        sigma=np.array(sigma),
        peak_offset=np.array(peak, dtype=np.int64),
        attack_width=np.array(attack, dtype=np.int64),
        trail_width=np.array(trail, dtype=np.int64),
    )


def gaussian_sir(sigma: float, n_wavelengths: int = 1, radius: int = None) -> ImpulseResponse:
    """Discrete Gaussian SIR truncated where the value drops below 1% of peak.

    Truncating at the 1% threshold makes the fitted attack/trail widths cover
    the full support, so signal gating loses no counts.
    """
    if sigma <= 0:
        raise InvalidSirError("sigma must be positive")
    if radius is None:
        # exp(-r^2 / 2 sigma^2) >= 0.01  <=>  r <= sigma * sqrt(2 ln 100)
        radius = int(np.floor(sigma * np.sqrt(2.0 * np.log(100.0))))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    f = np.exp(-0.5 * (x / sigma) ** 2)
    return fit_sir([f] * n_wavelengths)


def asymmetric_sir(attack: int = 3, trail: int = 26, n_wavelengths: int = 1) -> ImpulseResponse:
    """Asymmetric SIR with a short leading edge and a long trailing edge.

    Both edges ramp geometrically between the peak and the 1% threshold, and
    the support is truncated exactly at the threshold, so the fitted widths
    equal the requested ones.
    """
    if attack < 0 or trail < 0:
        raise InvalidSirError("edge widths must be non-negative")
    lead = WIDTH_THRESHOLD ** (np.arange(attack, 0, -1) / max(attack, 1))
    tail = WIDTH_THRESHOLD ** (np.arange(1, trail + 1) / max(trail, 1))
    f = np.concatenate([lead, [1.0], tail])
    return fit_sir([f] * n_wavelengths)


@dataclass(frozen=True)
class ScaleConfig:
    """Multi-scale window layout.

    windows are the square side lengths per scale (scale 1 is always the raw
    cube, side 1); neighborhood is the coupling window of the latent fields
    and guide_window the window the guidance weights range over.  The solver
    consumes the weight field's window, so both must match.
    """

    windows: tuple = (1, 3, 9)
    neighborhood: int = 3
    guide_window: int = 3

    def __post_init__(self):
        w = tuple(int(v) for v in self.windows)
        if len(w) == 0 or w[0] != 1:
            raise InvalidConfigError("first scale window must be 1 (raw cube)")
        if any(v % 2 == 0 or v < 1 for v in w):
            raise InvalidConfigError(f"all window sides must be odd, got {w}")
        if any(b <= a for a, b in zip(w, w[1:])):
            raise InvalidConfigError(f"window sides must be strictly increasing, got {w}")
        for name in ("neighborhood", "guide_window"):
            v = getattr(self, name)
            if v % 2 == 0 or v < 1:
                raise InvalidConfigError(f"{name} must be odd and positive, got {v}")
        if self.neighborhood != self.guide_window:
            raise InvalidConfigError(
                "neighborhood and guide_window must match: the weight field "
                "defines the coupling graph the solver runs on"
            )
        object.__setattr__(self, "windows", w)

    @property
    def n_scales(self) -> int:
        return len(self.windows)

    @property
    def areas(self) -> tuple:
        """Pixel count q per scale window (1, 9, 81, ... for sides 1, 3, 9)."""
        return tuple(v * v for v in self.windows)


@dataclass(frozen=True)
class MultiScaleEstimates:
    """Per-scale ML depth, reflectivity, and depth-likelihood variance maps.

    All maps keep the full pixel grid; coarser scales are window sums, not
    decimations.  sigma_bar_sq may be infinite where a pixel-scale has no
    signal counts; empty flags pixels whose (background-subtracted) histogram
    was all zero, where the reported depth defaults to bin 0.
    """

    d_ml: np.ndarray         # (L, rows, cols) depth in bins
    r_ml: np.ndarray         # (L, rows, cols, K) expected signal photons
    sigma_bar_sq: np.ndarray  # (L, rows, cols) bins^2
    empty: np.ndarray        # (L, rows, cols) bool

    @property
    def n_scales(self) -> int:
        return self.d_ml.shape[0]


@dataclass(frozen=True)
class SceneGroundTruth:
    """Reference depth/reflectivity maps with a target-present mask.

    depth is NaN at no-target pixels and finite in [0, T-1] elsewhere.
    """

    depth: np.ndarray         # (rows, cols)
    reflectivity: np.ndarray  # (rows, cols, K)
    mask: np.ndarray          # (rows, cols) bool

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float64)
        r = np.asarray(self.reflectivity, dtype=np.float64)
        m = np.asarray(self.mask, dtype=bool)
        if d.ndim != 2 or r.ndim != 3 or m.shape != d.shape or r.shape[:2] != d.shape:
            raise InvalidSceneError(
                f"inconsistent scene shapes: depth {d.shape}, reflectivity {r.shape}, mask {m.shape}"
            )
        if np.any(~np.isfinite(d[m])):
            raise InvalidSceneError("target pixels must have finite depth")
        if r.min(initial=0.0) < 0:
            raise InvalidSceneError("reflectivity must be non-negative")
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "reflectivity", r)
        object.__setattr__(self, "mask", m)

    @property
    def n_target(self) -> int:
        return int(self.mask.sum())

    @property
    def wavelengths(self) -> int:
        return self.reflectivity.shape[2]

    def scaled(self, gain: float) -> "SceneGroundTruth":
        """Copy with reflectivity scaled into expected signal photons."""
        return SceneGroundTruth(self.depth, self.reflectivity * gain, self.mask)


def build_pyramid(cube: HistogramCube, cfg: ScaleConfig) -> list:
    """Window-summed cubes at every scale, same pixel grid, reflect borders.

    Scale 1 is the input itself; the entry of scale l at pixel n is the sum
    of raw counts over the l-th window centered at n, per (t, k).
    """
    out = []
    # windows sum over (rows, cols): put those axes last
    swapped = cube.counts.transpose(0, 3, 1, 2)
    for w in cfg.windows:
        if w == 1:
            out.append(cube)
            continue
        summed = window_sum(swapped, w).transpose(0, 2, 3, 1)
        out.append(HistogramCube(summed, cube.bin_width_ps))
    return out


def ml_reflectivity(signal: np.ndarray) -> np.ndarray:
    """Per-pixel per-wavelength sum of signal counts, (K, rows, cols, T) -> (rows, cols, K)."""
    signal = np.asarray(signal)
    return signal.sum(axis=3).transpose(1, 2, 0).astype(np.float64)


def ml_depth(signal: np.ndarray, sir: ImpulseResponse):
    """Log-matched-filter depth per pixel, maximizing sum y log f over integer shifts.

    The SIR is floored at LOG_FLOOR outside its support so every shift in
    [0, T-1] has a defined score; ties pick the lowest shift.  The input may
    carry negative entries (unclamped background subtraction); the filter is
    a correlation score, not a likelihood, so they are legal and keep the
    score unbiased where the background was strong.  Returns (depth map
    (rows, cols) in peak-position bins, empty mask); empty pixels (no
    positive count mass) report depth 0.
    """
    signal = np.asarray(signal, dtype=np.float64)
    n_wav, rows, cols, n_bins = signal.shape
    if sir.n_wavelengths != n_wav:
        raise InvalidConfigError(
            f"SIR has {sir.n_wavelengths} wavelengths, cube has {n_wav}"
        )
    n_pix = rows * cols
    score = np.zeros((n_pix, n_bins))
    log_floor = np.log(LOG_FLOOR)
    for k in range(n_wav):
        f = sir.samples[k]
        po = int(sir.peak_offset[k])
        # kernel relative to the floor; the constant floor term
        # total_counts * log(LOG_FLOOR) is shift-independent and omitted
        ker = np.log(np.maximum(f, LOG_FLOOR)) - log_floor
        y = signal[k].reshape(n_pix, n_bins)
        for m in range(f.size):
            lo = max(0, po - m)
            hi = min(n_bins, n_bins + po - m)
            if lo < hi:
                score[:, lo:hi] += ker[m] * y[:, lo - po + m : hi - po + m]
    depth = np.argmax(score, axis=1).astype(np.float64)
    empty = np.maximum(signal, 0.0).sum(axis=(0, 3)).reshape(n_pix) <= 0
    depth[empty] = 0.0
    return depth.reshape(rows, cols), empty.reshape(rows, cols)


def depth_variance(r_ml: np.ndarray, sir: ImpulseResponse) -> np.ndarray:
    """Depth-likelihood variance (sum_k s_k / sigma_k^2)^-1, infinite at zero counts."""
    r_ml = np.asarray(r_ml, dtype=np.float64)
    inv = np.tensordot(r_ml, 1.0 / sir.sigma**2, axes=([2], [0]))
    with np.errstate(divide="ignore"):
        return np.where(inv > 0, 1.0 / np.where(inv > 0, inv, 1.0), np.inf)
