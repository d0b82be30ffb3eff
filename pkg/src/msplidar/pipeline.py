"""End-to-end reconstruction: front-end estimates, guides, weights, solver.

The front-end is shared with the cross-correlation baseline: build the
window-sum pyramid, estimate the smooth background from the coarsest level,
matched-filter each background-subtracted scale for depth, gate and sum for
reflectivity.  The full reconstruction then computes guides and weights once
and hands everything to the coordinate-descent solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .background import BackgroundEstimate, estimate_background, extract_signal
from .core import (
    HistogramCube,
    ImpulseResponse,
    MultiScaleEstimates,
    ScaleConfig,
    build_pyramid,
    depth_variance,
    ml_depth,
    ml_reflectivity,
)
from .errors import InvalidConfigError
from .guidance import (
    GuidanceConfig,
    WeightField,
    depth_weights,
    guide_depth_gd1,
    guide_depth_gd2,
    load_external_guide,
    reflectivity_weights,
)
from .solver import SolverConfig, SolverOutput, run


@dataclass(frozen=True)
class FrontEnd:
    """Multi-scale ML estimates plus the intermediates they came from.

    estimates holds reflectivities in each scale's summed-count units (the
    variance map needs the true photon mass); normalized_estimates divides
    them by the window areas so all scales are in expected photons per
    original pixel, the unit the latent reflectivity averages across scales.
    """

    pyramid: list
    background: BackgroundEstimate
    estimates: MultiScaleEstimates
    signal: list  # per-scale gated signal cubes
    areas: tuple

    @property
    def normalized_estimates(self) -> MultiScaleEstimates:
        norm = np.array(self.areas, dtype=np.float64)[:, None, None, None]
        return MultiScaleEstimates(
            d_ml=self.estimates.d_ml,
            r_ml=self.estimates.r_ml / norm,
            sigma_bar_sq=self.estimates.sigma_bar_sq,
            empty=self.estimates.empty,
        )


def multiscale_estimates(
    cube: HistogramCube,
    sir: ImpulseResponse,
    scales: ScaleConfig,
    significance: float = 0.0,
) -> FrontEnd:
    """Pyramid, background, and per-scale ML depth/reflectivity/variance maps.

    Depths come from matched filtering the background-subtracted (ungated)
    cubes; reflectivities from summing the gated signal around those depths.
    A detection gate then discards pixel-scales whose gated mass is
    explainable by clamped background noise alone: under pure background the
    clamp max(y - b, 0) collects about 0.4 * sum(sqrt(b)) counts inside the
    gate, so a gated mass below ``significance`` times that level marks the
    matched-filter depth as a background artifact.  Discarded pixel-scales
    get zero signal, hence infinite depth-likelihood variance, the same
    treatment the model gives genuinely empty pixels.  The default 0
    disables the gate (the plain front-end the baselines use); the full
    reconstruction enables it.
    """
    pyramid = build_pyramid(cube, scales)
    bg = estimate_background(pyramid[-1])
    areas = scales.areas
    n_scales = scales.n_scales
    rows, cols = cube.rows, cube.cols
    n_bins = cube.bins
    d_ml = np.empty((n_scales, rows, cols))
    empty = np.empty((n_scales, rows, cols), dtype=bool)
    for lvl in range(n_scales):
        g = areas[lvl] / areas[-1]
        # unclamped subtraction: clamping at zero would leave a positive
        # residual wherever the background is strong, biasing the matched
        # filter toward the background's temporal peak
        subtracted = pyramid[lvl].counts - g * bg.field
        d_ml[lvl], empty[lvl] = ml_depth(subtracted, sir)
    signal = extract_signal(pyramid, bg, d_ml, sir, scales)
    if significance > 0:
        t_idx = np.arange(n_bins)
        for lvl in range(n_scales):
            g = areas[lvl] / areas[-1]
            noise_bin = 0.4 * np.sqrt(g * bg.field)  # clamp-residual mean per bin
            d = d_ml[lvl].reshape(-1, 1)
            mass = np.zeros(rows * cols)
            floor = np.zeros(rows * cols)
            for k in range(cube.wavelengths):
                lo = np.maximum(0, d - int(sir.attack_width[k]))
                hi = np.minimum(n_bins - 1, d + int(sir.trail_width[k]))
                inside = (t_idx >= lo) & (t_idx <= hi)
                mass += (signal[lvl][k].reshape(-1, n_bins) * inside).sum(axis=1)
                floor += (noise_bin[k].reshape(-1, n_bins) * inside).sum(axis=1)
            suspect = (mass < significance * floor).reshape(rows, cols)
            signal[lvl][:, suspect, :] = 0.0
    r_ml = np.stack([ml_reflectivity(s) for s in signal])
    sigma_bar_sq = np.stack([depth_variance(r, sir) for r in r_ml])
    est = MultiScaleEstimates(d_ml=d_ml, r_ml=r_ml, sigma_bar_sq=sigma_bar_sq, empty=empty)
    return FrontEnd(pyramid=pyramid, background=bg, estimates=est, signal=signal, areas=areas)


@dataclass(frozen=True)
class Reconstruction:
    """Solver output plus the front-end products and weight fields."""

    output: SolverOutput
    front: FrontEnd
    depth_guides: np.ndarray
    w_field: WeightField
    v_field: WeightField

    @property
    def detected(self) -> np.ndarray:
        """Pixels that produced a point: nonzero gated signal at any scale.

        The latent depth is estimated everywhere the multi-scale data holds
        any accepted return; only pixels where every scale came up empty
        yield no point.
        """
        return np.any([s.sum(axis=(0, 3)) > 0 for s in self.front.signal], axis=0)


def compute_guides(front: FrontEnd, guidance: GuidanceConfig, scales: ScaleConfig,
                   depth_guide_path=None, intensity_guide_path=None):
    """Depth and intensity guide stacks per the configured guide choices."""
    est = front.estimates
    if guidance.guide_depth == "gd1":
        d_guides, _ = guide_depth_gd1(est.d_ml, guidance)
    elif guidance.guide_depth == "gd2":
        d_guides, _ = guide_depth_gd2(est.d_ml, guidance)
    else:
        if depth_guide_path is None:
            raise InvalidConfigError("external depth guide selected but no path given")
        d_guides = load_external_guide(depth_guide_path, est.d_ml.shape, "depth")
    if guidance.guide_intensity == "gi1":
        r_guides = front.normalized_estimates.r_ml
    else:
        if intensity_guide_path is None:
            raise InvalidConfigError("external intensity guide selected but no path given")
        r_guides = load_external_guide(intensity_guide_path, est.r_ml.shape, "reflectivity")
    return d_guides, r_guides


def reconstruct(
    cube: HistogramCube,
    sir: ImpulseResponse,
    scales: ScaleConfig = None,
    guidance: GuidanceConfig = None,
    solver: SolverConfig = None,
    depth_guide_path=None,
    intensity_guide_path=None,
    significance: float = 2.5,
) -> Reconstruction:
    """Full pipeline on a histogram cube; weights are computed once and frozen."""
    scales = scales or ScaleConfig()
    guidance = guidance or GuidanceConfig()
    solver = solver or SolverConfig()
    front = multiscale_estimates(cube, sir, scales, significance=significance)
    solver_est = front.normalized_estimates
    d_guides, r_guides = compute_guides(front, guidance, scales, depth_guide_path, intensity_guide_path)
    w_field = depth_weights(solver_est.d_ml, d_guides, scales, guidance)
    v_field = reflectivity_weights(solver_est.r_ml, r_guides, w_field, scales, guidance)
    output = run(solver_est, w_field, v_field, d_guides, solver)
    return Reconstruction(
        output=output, front=front, depth_guides=d_guides, w_field=w_field, v_field=v_field
    )
