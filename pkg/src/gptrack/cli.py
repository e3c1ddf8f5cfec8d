"""Command line interface.

Exit status is 0 on success, 1 for configuration errors and 2 for errors
raised while computing.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .acquisition import AcquisitionGeometry, limitedview_spectrum
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config, make_config
from .dynamics import (
    MotionModel,
    NoiseSpec,
    generate_msr_stream,
    load_cgpt_json,
    save_cgpt_json,
    simulate_contained_trajectory,
)
from .harness import (
    TRACK_HEADER,
    TRAJECTORY_HEADER,
    read_csv,
    read_msr_csv,
    reference_target,
    run_experiment,
    tracking_trial,
    write_csv,
)
from .reconstruct import noiseless_inversion, solve_least_squares, solve_tikhonov
from .tracker import GaussianBelief, ObservationModel, run_tracker

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _ConfigProblem(Exception):
    pass


def _config(args, experiment: str, **overrides) -> ExperimentConfig:
    try:
        if args.config:
            cfg = load_config(args.config)
            data = cfg.model_dump(mode="json")
        else:
            data = {"experiment": experiment}
        if args.seed is not None:
            overrides["seeds"] = [args.seed]
        if args.out is not None:
            overrides["out"] = str(args.out)
        return make_config(data, **overrides)
    except (ConfigError, FileNotFoundError) as exc:
        raise _ConfigProblem(str(exc)) from None


def _geometry(cfg: ExperimentConfig) -> AcquisitionGeometry:
    return cfg.geometry.build()


def _say(args, msg):
    if not args.quiet:
        print(msg)


def cmd_simulate(args) -> int:
    cfg = _config(args, "track-fullview")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    geom = _geometry(cfg)
    seed, p = cfg.seeds[0], cfg.noise_levels[0]
    M = reference_target(cfg, cfg.orders.k_data)
    motion = cfg.motion
    states, _ = simulate_contained_trajectory(
        MotionModel(motion.sigma_a, motion.sigma_theta, motion.dtau),
        cfg.initial_state, cfg.steps, geom, seed)
    frames = generate_msr_stream(M, states, geom, noise=NoiseSpec(p, seed))
    times = motion.dtau * np.arange(1, len(states) + 1)
    n = geom.n
    header = ("t",) + tuple(f"v_{s}_{r}" for s in range(1, n + 1) for r in range(1, n + 1))
    save_cgpt_json(out / "target.json", M)
    write_csv(out / "trajectory.csv", TRAJECTORY_HEADER,
              ((t, *X) for t, X in zip(times, states)), cfg, seed)
    write_csv(out / "msr_stream.csv", header,
              ((t, *V.ravel()) for t, V in zip(times, frames)), cfg, seed)
    _say(args, f"wrote {len(frames)} frames to {out}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    cfg = _config(args, "recon-vs-aperture")
    geom = _geometry(cfg)
    K = args.order if args.order is not None else cfg.orders.k_data
    V = read_msr_csv(args.msr, geom.n)
    if args.method == "lstsq":
        M = solve_least_squares(V, geom, K)
    elif args.method == "tikhonov":
        M = solve_tikhonov(V, geom, K, args.mu)
    else:
        M = np.asarray(noiseless_inversion(V, geom, K, cfg.dps), dtype=float)
    path = Path(cfg.out) / "cgpt.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_cgpt_json(path, M)
    _say(args, f"wrote order-{K} CGPT to {path}")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    cfg = _config(args, "spectrum")
    geom = _geometry(cfg)
    K = args.order if args.order is not None else cfg.orders.k_data
    rep = limitedview_spectrum(geom, K, cfg.dps)
    path = write_csv(Path(cfg.out) / "spectrum.csv", ("index", "singular_value"),
                     enumerate(rep.singular_values, start=1), cfg, list(cfg.seeds))
    _say(args, f"log10 cond = {rep.log10_condition:.6f}"
               f"{' (numerically singular)' if rep.numerically_singular else ''}; wrote {path}")
    return EXIT_OK


def cmd_track(args) -> int:
    cfg = _config(args, "track-fullview")
    out = Path(cfg.out)
    geom = _geometry(cfg)
    m = cfg.motion
    motion = MotionModel(m.sigma_a, m.sigma_theta, m.dtau)
    P0 = np.diag(cfg.initial_cov_diag)
    K = cfg.orders.k_track
    if args.msr_stream:
        header, data = read_csv(args.msr_stream)
        if data.shape[1] != geom.n**2 + 1:
            raise ValueError(f"{args.msr_stream}: expected t plus {geom.n**2} MSR columns")
        M = load_cgpt_json(args.target) if args.target else reference_target(cfg, K)
        if args.noise_std is None:
            raise ValueError("--noise-std is required when tracking a recorded stream")
        model = ObservationModel(M[:2 * K, :2 * K], geom, args.noise_std)
        frames = [row[1:].reshape(geom.n, geom.n) for row in data]
        beliefs = run_tracker(frames, model, motion, GaussianBelief(np.array(cfg.initial_guess), P0))
        nan = float("nan")
        rows = ((t, *b.mean[2:], nan, nan, nan, *np.diag(b.cov)) for t, b in zip(data[:, 0], beliefs))
        path = write_csv(out / "track.csv", TRACK_HEADER, rows, cfg, cfg.seeds[0])
        _say(args, f"tracked {len(frames)} frames; wrote {path}")
        return EXIT_OK
    seed, p = cfg.seeds[0], cfg.noise_levels[0]
    res = tracking_trial(geom, reference_target(cfg, cfg.orders.k_data), K, motion,
                         cfg.initial_state, cfg.initial_guess, P0, p, seed, cfg.steps)
    if not res.ok:
        raise RuntimeError(res.error)
    rows = ((t, e[2], e[3], e[4], x[2], x[3], x[4], *v)
            for t, e, x, v in zip(res.times, res.estimates, res.truth, res.variances))
    path = write_csv(out / "track.csv", TRACK_HEADER, rows, cfg, seed)
    pos, ori = res.rmse()
    _say(args, f"position RMSE {pos:.4g}, orientation RMSE {ori:.4g} rad (last 25%); wrote {path}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _config(args, args.id)
    if cfg.experiment != args.id:
        raise _ConfigProblem(f"config is for experiment {cfg.experiment!r}, not {args.id!r}")
    paths = run_experiment(cfg)
    _say(args, f"wrote {len(paths)} files to {cfg.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config")
    common.add_argument("--seed", type=int, help="override the config seeds with one seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--quiet", action="store_true", help="only report errors")

    parser = argparse.ArgumentParser(prog="gptrack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a trajectory and MSR stream")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", parents=[common], help="recover CGPTs from an MSR matrix")
    p.add_argument("--msr", type=Path, required=True, help="CSV with N rows of N values")
    p.add_argument("--order", type=int)
    p.add_argument("--method", choices=("lstsq", "tikhonov", "left-inverse"), default="lstsq")
    p.add_argument("--mu", type=float, default=1e-3)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("spectrum", parents=[common], help="singular values of the forward operator")
    p.add_argument("--order", type=int)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("track", parents=[common], help="run the EKF")
    p.add_argument("--msr-stream", type=Path, help="stream CSV written by 'simulate'")
    p.add_argument("--target", type=Path, help="reference CGPT JSON")
    p.add_argument("--noise-std", type=float, help="measurement noise std of a recorded stream")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("experiment", parents=[common], help="run a named experiment")
    p.add_argument("id", choices=EXPERIMENTS)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except _ConfigProblem as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
