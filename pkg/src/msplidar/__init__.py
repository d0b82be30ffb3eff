"""Robust multispectral single-photon lidar reconstruction.

Reconstructs depth, reflectivity, and per-pixel uncertainty maps from
timing-histogram photon counts using a multi-scale hierarchical Bayesian
model solved by coordinate descent, with a matching Poisson simulator and
evaluation harness.
"""

from .background import BackgroundEstimate, estimate_background, extract_signal
from .core import (
    HistogramCube,
    ImpulseResponse,
    MultiScaleEstimates,
    ScaleConfig,
    SceneGroundTruth,
    asymmetric_sir,
    build_pyramid,
    depth_variance,
    fit_sir,
    gaussian_sir,
    ml_depth,
    ml_reflectivity,
)
from .errors import (
    ConfigFileError,
    FileFormatError,
    InvalidConfigError,
    InvalidSceneError,
    InvalidSirError,
    MsplidarError,
    NumericalFailureError,
    UndefinedMetricError,
)
from .evaluate import MetricReport, dae, detection_metrics, iae, report, run_class, run_xcorr
from .guidance import (
    GuidanceConfig,
    WeightField,
    depth_weights,
    guide_depth_gd1,
    guide_depth_gd2,
    load_external_guide,
    reflectivity_weights,
)
from .pipeline import Reconstruction, multiscale_estimates, reconstruct
from .simulate import (
    BackgroundShape,
    SimSpec,
    calibrate_levels,
    make_scene,
    mean_cube,
    sample_histograms,
    simulate_cube,
)
from .solver import SolverConfig, SolverOutput, SolverState, negative_log_posterior
from .solver import run as run_solver

__version__ = "0.1.0"

__all__ = [
    "BackgroundEstimate",
    "BackgroundShape",
    "ConfigFileError",
    "FileFormatError",
    "GuidanceConfig",
    "HistogramCube",
    "ImpulseResponse",
    "InvalidConfigError",
    "InvalidSceneError",
    "InvalidSirError",
    "MetricReport",
    "MsplidarError",
    "MultiScaleEstimates",
    "NumericalFailureError",
    "Reconstruction",
    "ScaleConfig",
    "SceneGroundTruth",
    "SimSpec",
    "SolverConfig",
    "SolverOutput",
    "SolverState",
    "UndefinedMetricError",
    "WeightField",
    "asymmetric_sir",
    "build_pyramid",
    "calibrate_levels",
    "dae",
    "depth_variance",
    "depth_weights",
    "detection_metrics",
    "estimate_background",
    "extract_signal",
    "fit_sir",
    "gaussian_sir",
    "guide_depth_gd1",
    "guide_depth_gd2",
    "iae",
    "load_external_guide",
    "make_scene",
    "mean_cube",
    "ml_depth",
    "ml_reflectivity",
    "multiscale_estimates",
    "negative_log_posterior",
    "reconstruct",
    "report",
    "run_class",
    "run_solver",
    "run_xcorr",
    "sample_histograms",
    "simulate_cube",
]
