"""Command-line interface: simulate, reconstruct, evaluate, sweep.

Every command reads an optional key=value config file; the common flags
override individual keys.  Failures exit nonzero with a single
machine-parseable line on stderr: ``error: <kind>: <message>``.
"""

from __future__ import annotations

import argparse
import multiprocessing
import os
import sys
import time

import numpy as np

from . import evaluate as ev
from . import fileio
from .core import ImpulseResponse, ScaleConfig, asymmetric_sir, fit_sir, gaussian_sir
from .errors import ConfigFileError, InvalidConfigError, MsplidarError
from .fileio import RunConfig
from .guidance import GuidanceConfig
from .pipeline import reconstruct
from .simulate import BackgroundShape, SimSpec, make_scene, simulate_cube
from .solver import SolverConfig


# ---------------------------------------------------------------------------
# config -> component assembly
# ---------------------------------------------------------------------------

def build_scale_config(cfg: RunConfig) -> ScaleConfig:
    windows = [int(v) for v in cfg.float_list("scale_windows")]
    n = int(cfg["scales"])
    if n < 1 or n > len(windows):
        raise InvalidConfigError(
            f"scales={n} needs between 1 and {len(windows)} entries of scale_windows"
        )
    return ScaleConfig(
        windows=tuple(windows[:n]),
        neighborhood=int(cfg["neighborhood"]),
        guide_window=int(cfg["guide_window"]),
    )


def build_guidance_config(cfg: RunConfig) -> GuidanceConfig:
    return GuidanceConfig(
        zeta=float(cfg["zeta"]),
        eta_floor=float(cfg["eta_floor"]),
        guide_depth=cfg["guide_depth"],
        guide_intensity=cfg["guide_intensity"],
        gd1_min_agree=int(cfg["gd1_min_agree"]),
        gd2_k=int(cfg["gd2_k"]),
        gd2_std_mult=float(cfg["gd2_std_mult"]),
    )


def build_solver_config(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(
        alpha_d=float(cfg["alpha_d"]),
        beta_d=float(cfg["beta_d"]),
        alpha_r=float(cfg["alpha_r"]),
        beta_r=float(cfg["beta_r"]),
        max_iters=int(cfg["max_iters"]),
        xi=float(cfg["xi"]),
        eps_floor=float(cfg["eps_floor"]),
        psi_floor=float(cfg["psi_floor"]),
        shape_convention=cfg["shape_convention"],
        eps_power=int(cfg["eps_power"]),
    )


def build_sir(cfg: RunConfig) -> ImpulseResponse:
    spec = cfg["sir"]
    n_wav = int(cfg["wavelengths"])
    parts = spec.split(":")
    if parts[0] == "gaussian":
        return gaussian_sir(float(parts[1]), n_wavelengths=n_wav)
    if parts[0] == "asymmetric":
        return asymmetric_sir(int(parts[1]), int(parts[2]), n_wavelengths=n_wav)
    if parts[0] == "file":
        samples = np.loadtxt(parts[1], ndmin=2)
        if samples.shape[0] != n_wav:
            raise InvalidConfigError(
                f"SIR file has {samples.shape[0]} rows, config says {n_wav} wavelengths"
            )
        return fit_sir(list(samples))
    raise InvalidConfigError(f"unknown SIR spec {spec!r}")


def build_scene(cfg: RunConfig):
    kind = cfg["scene"]
    params = {}
    if kind == "two_plane":
        params["depths"] = tuple(cfg.float_list("scene_depths"))
        params["reflectivities"] = tuple(cfg.float_list("scene_reflectivities"))
    elif kind == "staircase":
        params["start"] = float(cfg["scene_start"])
        params["step"] = float(cfg["scene_step"])
        params["run"] = int(cfg["scene_run"])
    elif kind == "from_files":
        params["scene_dir"] = cfg["scene_dir"]
    params["empty_border"] = int(cfg["scene_empty_border"])
    return make_scene(
        kind,
        int(cfg["rows"]),
        int(cfg["cols"]),
        int(cfg["bins"]),
        int(cfg["wavelengths"]),
        **params,
    )


def build_sim_spec(cfg: RunConfig) -> SimSpec:
    return SimSpec(
        scene=build_scene(cfg),
        sir=build_sir(cfg),
        bins=int(cfg["bins"]),
        sbr=float(cfg["sbr"]),
        ppp=float(cfg["ppp"]),
        background=BackgroundShape.parse(cfg["background"]),
        seed=int(cfg["seed"]),
        bin_width_ps=float(cfg["bin_width_ps"]),
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, args) -> int:
    out = args.output
    spec = build_sim_spec(cfg)
    cube, truth = simulate_cube(spec)
    os.makedirs(out, exist_ok=True)
    fileio.write_cube(cube, os.path.join(out, "cube.sphc"))
    fileio.save_scene(truth, out)
    fileio.write_config(cfg, os.path.join(out, "run_config.cfg"))
    print(
        f"simulated {cube.rows}x{cube.cols}x{cube.bins}x{cube.wavelengths} cube, "
        f"{cube.total()} photons -> {out}"
    )
    return 0


def _run_algorithm(algorithm: str, cube, sir, cfg: RunConfig):
    """Run one reconstruction; returns (depth, refl, uncertainties, detected, trace, iters, seconds)."""
    t0 = time.perf_counter()
    if algorithm == "class":
        depth, refl, detected = ev.run_class(cube, sir)
        unc_d = np.zeros_like(depth)
        unc_r = np.zeros_like(refl)
        trace, iters = None, 0
    elif algorithm == "xcorr":
        depth, refl, detected = ev.run_xcorr(cube, sir, build_scale_config(cfg))
        unc_d = np.zeros_like(depth)
        unc_r = np.zeros_like(refl)
        trace, iters = None, 0
    else:
        rec = reconstruct(
            cube,
            sir,
            scales=build_scale_config(cfg),
            guidance=build_guidance_config(cfg),
            solver=build_solver_config(cfg),
            depth_guide_path=cfg["guide_depth_path"] or None,
            intensity_guide_path=cfg["guide_intensity_path"] or None,
            significance=float(cfg["signal_significance"]),
        )
        depth = rec.output.depth
        refl = rec.output.reflectivity
        unc_d = rec.output.depth_uncertainty
        unc_r = rec.output.reflectivity_uncertainty
        detected = rec.detected
        trace = rec.output.objective_trace
        iters = rec.output.iterations_run
    return depth, refl, unc_d, unc_r, detected, trace, iters, time.perf_counter() - t0


def cmd_reconstruct(cfg: RunConfig, args) -> int:
    cube = fileio.read_cube(args.input)
    if cube.wavelengths != int(cfg["wavelengths"]):
        cfg = cfg.override(wavelengths=cube.wavelengths)
    sir = build_sir(cfg)
    algorithm = cfg["algorithm"]
    depth, refl, unc_d, unc_r, detected, trace, iters, seconds = _run_algorithm(
        algorithm, cube, sir, cfg
    )
    out = args.output
    os.makedirs(out, exist_ok=True)
    fileio.write_map(depth, "depth", "bins", os.path.join(out, "depth.map"))
    fileio.write_map(refl, "reflectivity", "photons", os.path.join(out, "reflectivity.map"))
    fileio.write_map(detected.astype(float), "mask", "flag", os.path.join(out, "detection.map"))
    fileio.write_map(unc_d, "uncertainty", "bins2", os.path.join(out, "depth_uncertainty.map"))
    fileio.write_map(unc_r, "uncertainty", "photons2", os.path.join(out, "reflectivity_uncertainty.map"))
    fileio.write_point_cloud(depth, refl, unc_d, detected, os.path.join(out, "points.xyz"))
    if trace is not None:
        rows = "\n".join(f"{i},{fileio.csv_cell(float(v))}" for i, v in enumerate(trace))
        fileio._atomic_write(os.path.join(out, "trace.csv"), ("sweep,objective\n" + rows + "\n").encode())
    print(f"reconstructed ({algorithm}) in {seconds:.2f}s, {iters} sweeps -> {out}")
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    truth = fileio.load_scene(args.truth)
    depth = fileio.read_map(os.path.join(args.input, "depth.map")).values[:, :, 0]
    refl = fileio.read_map(os.path.join(args.input, "reflectivity.map")).values
    det_path = os.path.join(args.input, "detection.map")
    detected = None
    if os.path.exists(det_path):
        detected = fileio.read_map(det_path).values[:, :, 0] > 0.5
    taus = cfg.float_list("taus")
    rep = ev.report(
        depth, refl, truth, taus=taus, detected=detected,
        bin_width_ps=float(cfg["bin_width_ps"]),
        group_velocity=float(cfg["group_velocity"]),
    )
    os.makedirs(args.output, exist_ok=True)
    header, row = _metric_row(rep, cfg["algorithm"], taus)
    fileio.append_csv_row(os.path.join(args.output, "metrics.csv"), header, row)
    print(
        f"dae={rep.dae_bins:.4g} bins ({rep.dae_meters:.4g} m), "
        f"iae={np.mean(rep.iae):.4g}, pd[tau={taus[0]:g}]={rep.pd_at_tau[0]:.4g}"
    )
    return 0


def _metric_row(rep: ev.MetricReport, algorithm: str, taus):
    header = ["algorithm", "dae_bins", "dae_m", "iae_mean"]
    row = [algorithm, rep.dae_bins, rep.dae_meters, float(np.mean(rep.iae))]
    for i, tau in enumerate(taus):
        header += [f"pd_tau{tau:g}", f"fd_tau{tau:g}", f"det_iae_tau{tau:g}"]
        row += [
            float(rep.pd_at_tau[i]),
            int(rep.false_detections[i]),
            float(np.mean(rep.detection_iae[i])),
        ]
    header.append("runtime_s")
    row.append(rep.runtime_s)
    return header, row


def _sweep_header(taus):
    header = ["algorithm", "sbr", "ppp", "background", "seed", "dae_bins", "iae_mean"]
    for tau in taus:
        header += [f"pd_tau{tau:g}", f"fd_tau{tau:g}"]
    header += ["iterations", "runtime_s"]
    return header


def _sweep_cell(payload):
    """One (sbr, ppp, background, seed) cell: simulate once, run each algorithm."""
    values, sbr, ppp, background, seed, algorithms = payload
    cfg = RunConfig(values).override(sbr=sbr, ppp=ppp, background=background, seed=seed)
    spec = build_sim_spec(cfg)
    cube, truth = simulate_cube(spec)
    sir = build_sir(cfg)
    taus = cfg.float_list("taus")
    rows = []
    for algorithm in algorithms:
        depth, refl, _, _, detected, _, iters, seconds = _run_algorithm(algorithm, cube, sir, cfg)
        rep = ev.report(depth, refl, truth, taus=taus, detected=detected, runtime_s=seconds)
        row = [algorithm, sbr, ppp, background, seed, rep.dae_bins, float(np.mean(rep.iae))]
        for i in range(len(taus)):
            row += [float(rep.pd_at_tau[i]), int(rep.false_detections[i])]
        row += [iters, seconds]
        rows.append(row)
    return rows


def cmd_sweep(cfg: RunConfig, args) -> int:
    taus = cfg.float_list("taus")
    algorithms = cfg.str_list("sweep_algorithms")
    cells = []
    for background in cfg.str_list("sweep_backgrounds"):
        for sbr in cfg.float_list("sweep_sbr"):
            for ppp in cfg.float_list("sweep_ppp"):
                for seed in cfg.int_list("sweep_seeds"):
                    cells.append((sbr, ppp, background, seed))
    os.makedirs(args.output, exist_ok=True)
    csv_path = os.path.join(args.output, "sweep.csv")
    done = set()
    if os.path.exists(csv_path):
        with open(csv_path, "r", encoding="ascii") as handle:
            next(handle, None)
            for line in handle:
                parts = line.strip().split(",")
                if len(parts) >= 5:
                    done.add(tuple(parts[:5]))

    def cell_key(algorithm, sbr, ppp, background, seed):
        return (
            algorithm,
            fileio.csv_cell(float(sbr)),
            fileio.csv_cell(float(ppp)),
            background,
            str(seed),
        )

    pending = []
    for sbr, ppp, background, seed in cells:
        missing = [a for a in algorithms if cell_key(a, sbr, ppp, background, seed) not in done]
        if missing:
            pending.append((cfg.values, sbr, ppp, background, seed, missing))
    header = _sweep_header(taus)
    n_workers = max(1, int(cfg["threads"]))
    written = 0
    if n_workers > 1 and len(pending) > 1:
        with multiprocessing.Pool(n_workers) as pool:
            for rows in pool.imap(_sweep_cell, pending):
                for row in rows:
                    fileio.append_csv_row(csv_path, header, row)
                    written += 1
    else:
        for payload in pending:
            for row in _sweep_cell(payload):
                fileio.append_csv_row(csv_path, header, row)
                written += 1
    print(f"sweep: {written} new rows, {len(done)} already present -> {csv_path}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument("--input", default=None, help="input path (.sphc cube or estimate dir)")
    parser.add_argument("--output", default="out", help="output directory")
    parser.add_argument("--truth", default=None, help="ground-truth scene directory (evaluate)")
    parser.add_argument("--algorithm", choices=["prop", "class", "xcorr"], default=None)
    parser.add_argument("--sbr", default=None, help="signal-to-background ratio")
    parser.add_argument("--ppp", default=None, help="average photons per pixel")
    parser.add_argument("--background", default=None, help="uniform or gamma:A:B")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--scales", type=int, default=None, help="number of scales")
    parser.add_argument("--threads", type=int, default=None, help="worker processes for sweep cells")
    parser.add_argument("--tau", default=None, help="comma list of detection tolerances (bins)")


def _load_config(args) -> RunConfig:
    cfg = fileio.read_config(args.config) if args.config else fileio.default_config()
    overrides = {}
    if args.algorithm is not None:
        overrides["algorithm"] = args.algorithm
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.scales is not None:
        overrides["scales"] = args.scales
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.tau is not None:
        overrides["taus"] = args.tau
    if args.background is not None:
        overrides["background"] = args.background.split(",")[0]
        overrides["sweep_backgrounds"] = args.background
    if args.sbr is not None:
        overrides["sweep_sbr"] = args.sbr
        if "," not in args.sbr:
            overrides["sbr"] = float(args.sbr)
    if args.ppp is not None:
        overrides["sweep_ppp"] = args.ppp
        if "," not in args.ppp:
            overrides["ppp"] = float(args.ppp)
    return cfg.override(**overrides)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="msplidar",
        description="Multi-scale Bayesian reconstruction of single-photon lidar histograms",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("simulate", "draw a Poisson histogram cube and its ground truth"),
        ("reconstruct", "estimate depth/reflectivity maps from a cube"),
        ("evaluate", "score estimate maps against a ground-truth scene"),
        ("sweep", "grid of simulate+reconstruct+evaluate cells"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg, args)
        if args.command == "reconstruct":
            if not args.input:
                raise ConfigFileError("reconstruct needs --input CUBE.sphc")
            return cmd_reconstruct(cfg, args)
        if args.command == "evaluate":
            if not args.input or not args.truth:
                raise ConfigFileError("evaluate needs --input ESTIMATE_DIR and --truth SCENE_DIR")
            return cmd_evaluate(cfg, args)
        if args.command == "sweep":
            return cmd_sweep(cfg, args)
        raise ConfigFileError(f"unknown command {args.command!r}")
    except ConfigFileError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (MsplidarError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
