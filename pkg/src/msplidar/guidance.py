"""Guide maps and multi-scale guidance weights.

The reconstruction couples each pixel's latent depth and reflectivity to the
multi-scale ML maps of its neighbors through normalized weight fields.  The
weights compare each scale's ML map against an outlier-cleaned guide: close
values get near-uniform weight, deviating ones decay exponentially.  Two
built-in depth guides (a local agreement filter and a k-NN point-cloud
outlier rejector) and the identity intensity guide cover the default path;
externally computed guide maps can be injected from files in their place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import ScaleConfig
from .errors import FileFormatError, InvalidConfigError
from .grid import lower_median, neighbor_table, reflect_index


@dataclass(frozen=True)
class GuidanceConfig:
    """Weight and guide parameters.

    zeta is the depth tolerance in bins (a few SIR widths); eta_floor the
    reflectivity similarity floor; gd1_min_agree the number of agreeing 3x3
    neighbors a pixel needs to count as valid; gd2_k / gd2_std_mult the k-NN
    count and the std multiplier of the point-cloud outlier rule.
    """

    zeta: float = 9.0
    eta_floor: float = 0.1
    guide_depth: str = "gd1"
    guide_intensity: str = "gi1"
    gd1_min_agree: int = 3
    gd2_k: int = 8
    gd2_std_mult: float = 1.0

    def __post_init__(self):
        if self.zeta <= 0:
            raise InvalidConfigError("zeta must be positive")
        if self.eta_floor <= 0:
            raise InvalidConfigError("eta_floor must be positive")
        if self.guide_depth not in ("gd1", "gd2", "external"):
            raise InvalidConfigError(f"unknown depth guide {self.guide_depth!r}")
        if self.guide_intensity not in ("gi1", "external"):
            raise InvalidConfigError(f"unknown intensity guide {self.guide_intensity!r}")
        if self.gd1_min_agree < 1:
            raise InvalidConfigError("gd1_min_agree must be at least 1")
        if self.gd2_k < 1:
            raise InvalidConfigError("gd2_k must be at least 1")
        if self.gd2_std_mult <= 0:
            raise InvalidConfigError("gd2_std_mult must be positive")


@dataclass(frozen=True)
class WeightField:
    """Normalized guidance weights over (scale, window slot) per pixel.

    values is (L, w*w, N) for depth or (L, w*w, N, K) for reflectivity;
    entries are non-negative and sum to 1 over (scale, slot) per pixel (and
    wavelength).
    """

    values: np.ndarray
    window: int

    @property
    def n_scales(self) -> int:
        return self.values.shape[0]

    def row_sums(self) -> np.ndarray:
        return self.values.sum(axis=(0, 1))


def _infill_from_valid(depth2d: np.ndarray, valid2d: np.ndarray) -> np.ndarray:
    """Replace invalid pixels by the median of valid pixels in an expanding window.

    Windows grow 3x3, 5x5, ... clipped to the grid until at least one valid
    pixel is inside; all-invalid input falls back to the untouched map.
    """
    rows, cols = depth2d.shape
    if not valid2d.any():
        return depth2d.copy()
    out = depth2d.copy()
    scale_median = lower_median(depth2d[valid2d].ravel())
    max_rad = max(rows, cols)
    for r, c in zip(*np.nonzero(~valid2d)):
        rad = 1
        while rad <= max_rad:
            r0, r1 = max(0, r - rad), min(rows, r + rad + 1)
            c0, c1 = max(0, c - rad), min(cols, c + rad + 1)
            block_valid = valid2d[r0:r1, c0:c1]
            if block_valid.any():
                out[r, c] = lower_median(depth2d[r0:r1, c0:c1][block_valid].ravel())
                break
            rad += 1
        else:
            out[r, c] = scale_median
    return out


def _gd1_single(depth2d: np.ndarray, cfg: GuidanceConfig):
    """Local-agreement cleaning of one depth map.

    A pixel is valid when at least gd1_min_agree of its 3x3 window slots
    (center excluded, reflect borders) hold depths within 2*zeta of its own;
    invalid pixels take the median of valid pixels in an expanding window.
    Returns (cleaned map, fallback flag); a map with no valid pixel at all
    is returned unmodified with the flag set.
    """
    rows, cols = depth2d.shape
    nbr = neighbor_table(rows, cols, 3)
    center_slot = 4
    flat = depth2d.reshape(-1)
    agree = np.abs(flat[nbr] - flat[None, :]) <= 2.0 * cfg.zeta
    agree[center_slot] = False
    valid = agree.sum(axis=0) >= cfg.gd1_min_agree
    if not valid.any():
        return depth2d.copy(), True
    return _infill_from_valid(depth2d, valid.reshape(rows, cols)), False


def _coarse_to_fine(guides: np.ndarray, zeta: float) -> np.ndarray:
    """Reconcile per-scale guide maps from coarsest to finest.

    A finer-scale value survives only where it falls within 2*zeta of some
    entry of the next-coarser guide inside a 3x3 window (tolerating the
    edge shifts window summing introduces); elsewhere it inherits the
    coarser value.  Local cleaning alone cannot reject spatially coherent
    false surfaces that strong background returns imprint on the fine
    scales; the coarsest scale, with the best photon statistics, arbitrates,
    while genuinely resolved fine detail stays.
    """
    n_scales, rows, cols = guides.shape
    out = guides.copy()
    nbr = neighbor_table(rows, cols, 3)
    for lvl in range(n_scales - 2, -1, -1):
        coarser = out[lvl + 1]
        near = np.abs(coarser.reshape(-1)[nbr] - out[lvl].reshape(-1)[None, :])
        consistent = (near.min(axis=0) <= 2.0 * zeta).reshape(rows, cols)
        out[lvl] = np.where(consistent, out[lvl], coarser)
    return out


def guide_depth_gd1(d_ml: np.ndarray, cfg: GuidanceConfig):
    """Agreement-filtered depth guide per scale with cross-scale consistency.

    Each scale is first cleaned by the local-agreement rule (valid = at
    least gd1_min_agree 3x3 neighbors within 2*zeta, invalid pixels in-fill
    from the expanding-window median of valid ones), then the cleaned
    scales are reconciled coarse to fine.  Returns (guides, fallback) with
    per-scale no-valid-pixel flags.
    """
    n_scales = d_ml.shape[0]
    guides = np.empty_like(d_ml)
    fallback = np.zeros(n_scales, dtype=bool)
    for lvl in range(n_scales):
        guides[lvl], fallback[lvl] = _gd1_single(d_ml[lvl], cfg)
    return _coarse_to_fine(guides, cfg.zeta), fallback


def guide_depth_gd2(d_ml: np.ndarray, cfg: GuidanceConfig):
    """Point-cloud outlier-rejection depth guide per scale.

    Pixels embed as (col, row, depth) points; a point is an outlier when its
    mean distance to the gd2_k nearest neighbors exceeds the population mean
    plus gd2_std_mult standard deviations.  The point set is extended with a
    reflect-padded ghost margin covering the k-NN search radius, so border
    pixels see the same local geometry as interior ones and a constant map
    yields no outliers.  Outliers are replaced by the same expanding-window
    median rule as the agreement guide.
    """
    n_scales, rows, cols = d_ml.shape
    if rows * cols < cfg.gd2_k + 1:
        raise InvalidConfigError(
            f"need at least gd2_k+1 = {cfg.gd2_k + 1} pixels, grid has {rows * cols}"
        )
    margin = int(np.ceil(np.sqrt(cfg.gd2_k + 1))) // 2 + 1
    rr = reflect_index(np.arange(-margin, rows + margin), rows)
    cc = reflect_index(np.arange(-margin, cols + margin), cols)
    prow, pcol = np.meshgrid(
        np.arange(-margin, rows + margin), np.arange(-margin, cols + margin), indexing="ij"
    )
    guides = np.empty_like(d_ml)
    outliers = np.zeros((n_scales, rows, cols), dtype=bool)
    for lvl in range(n_scales):
        padded = d_ml[lvl][np.ix_(rr, cc)]
        pts = np.column_stack([pcol.ravel(), prow.ravel(), padded.ravel()]).astype(np.float64)
        inner = ((prow >= 0) & (prow < rows) & (pcol >= 0) & (pcol < cols)).ravel()
        dist, _ = cKDTree(pts).query(pts[inner], k=cfg.gd2_k + 1)
        mean_dist = dist[:, 1:].mean(axis=1)
        cut = mean_dist.mean() + cfg.gd2_std_mult * mean_dist.std()
        bad = (mean_dist > cut).reshape(rows, cols)
        outliers[lvl] = bad
        guides[lvl] = _infill_from_valid(d_ml[lvl], ~bad)
    return _coarse_to_fine(guides, cfg.zeta), outliers


def depth_weights(
    d_ml: np.ndarray, guides: np.ndarray, scales: ScaleConfig, cfg: GuidanceConfig
) -> WeightField:
    """Multi-scale depth weights, normalized per pixel over (scale, slot).

    Raw weight of (pixel n, slot j) at scale l is
        chain(l) * exp(-|d_ml[l, n] - guide[l, n']| / (2 zeta q_l))
    with q_l the scale's window side and chain(l) the running product of
    (1 - raw weight) over earlier scales, so coarse scales only pick up the
    mass fine scales left unclaimed.  The chain consumes pre-normalization
    raw weights, which live in [0, 1] by construction.  The bandwidth grows
    with the window side, the distance a window sum can displace an edge;
    growing it with the window area would exceed the whole histogram span
    at the coarsest scale and disable the similarity test there.
    """
    n_scales, rows, cols = d_ml.shape
    if guides.shape != d_ml.shape:
        raise InvalidConfigError("guide and ML depth shapes differ")
    if n_scales != scales.n_scales:
        raise InvalidConfigError("depth map scale count differs from ScaleConfig")
    nbr = neighbor_table(rows, cols, scales.guide_window)
    n_slots, n_pix = nbr.shape
    raw = np.empty((n_scales, n_slots, n_pix))
    chain = np.ones((n_slots, n_pix))
    for lvl in range(n_scales):
        dml = d_ml[lvl].reshape(-1)
        g = guides[lvl].reshape(-1)
        w = chain * np.exp(-np.abs(dml[None, :] - g[nbr]) / (2.0 * cfg.zeta * scales.windows[lvl]))
        raw[lvl] = w
        chain = chain * (1.0 - np.clip(w, 0.0, 1.0))
    return WeightField(_normalize(raw), scales.guide_window)


def reflectivity_weights(
    r_ml: np.ndarray,
    guides: np.ndarray,
    w_field: WeightField,
    scales: ScaleConfig,
    cfg: GuidanceConfig,
) -> WeightField:
    """Bilateral reflectivity weights: depth weights times intensity similarity.

    Per wavelength, the similarity scale eta is max(eta_floor, coarsest-scale
    ML reflectivity), tracking the signal-dependent noise level of photon
    counts.  Normalized per (pixel, wavelength); slots with zero depth weight
    stay zero.
    """
    n_scales, rows, cols, n_wav = r_ml.shape
    if guides.shape != r_ml.shape:
        raise InvalidConfigError("guide and ML reflectivity shapes differ")
    nbr = neighbor_table(rows, cols, scales.guide_window)
    n_slots, n_pix = nbr.shape
    eta = np.maximum(cfg.eta_floor, r_ml[-1].reshape(n_pix, n_wav))
    raw = np.empty((n_scales, n_slots, n_pix, n_wav))
    for lvl in range(n_scales):
        rml = r_ml[lvl].reshape(n_pix, n_wav)
        g = guides[lvl].reshape(n_pix, n_wav)
        sim = np.exp(
            -np.abs(rml[None, :, :] - g[nbr]) / (2.0 * eta[None, :, :] * scales.windows[lvl])
        )
        raw[lvl] = w_field.values[lvl][:, :, None] * sim
    return WeightField(_normalize(raw), scales.guide_window)


def _normalize(raw: np.ndarray) -> np.ndarray:
    """Normalize over (scale, slot) per trailing index; uniform fallback at zero mass."""
    total = raw.sum(axis=(0, 1))
    n_entries = raw.shape[0] * raw.shape[1]
    safe = np.where(total > 0, total, 1.0)
    out = raw / safe
    if np.any(total <= 0):
        out = np.where(total <= 0, 1.0 / n_entries, out)
    return out


def load_external_guide(path, expected_shape: tuple, semantic: str = "depth") -> np.ndarray:
    """Load an externally computed guide stack and validate it.

    The file is a map file whose channels flatten the leading guide axes
    (scales, or scales x wavelengths); values must be finite, and
    reflectivity guides non-negative.
    """
    from .fileio import read_map

    maps = read_map(path)
    data = maps.values
    expected = tuple(int(v) for v in expected_shape)
    # map files store (rows, cols, channels); guides want (scales, rows, cols [, K])
    if semantic == "depth":
        want = (expected[1], expected[2], expected[0])
    else:
        want = (expected[1], expected[2], expected[0] * expected[3])
    if data.shape != want:
        raise FileFormatError(
            f"guide at {path} has shape {data.shape}, expected {want} for {expected}"
        )
    if semantic == "depth":
        out = np.moveaxis(data, 2, 0)
    else:
        out = data.reshape(expected[1], expected[2], expected[0], expected[3])
        out = np.moveaxis(out, 2, 0)
    if not np.all(np.isfinite(out)):
        raise FileFormatError(f"guide at {path} contains non-finite values")
    if semantic != "depth" and out.min() < 0:
        raise FileFormatError(f"reflectivity guide at {path} contains negative values")
    return np.ascontiguousarray(out, dtype=np.float64)
