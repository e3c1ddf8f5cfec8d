"""Seeded experiment drivers and CSV output.

Every CSV written here has a header row, LF line endings, floats in
scientific notation with 17 significant digits, and trailing ``#``
comment lines carrying the SHA-256 of the resolved config, the seed(s),
and the resolved config itself.  Re-running a config reproduces the files
byte for byte.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .acquisition import (
    AcquisitionGeometry,
    apply_forward,
    check_msr,
    fullview_singular_values,
    gram_spectra,
    limitedview_spectrum,
)
from .config import ExperimentConfig, balanced_groups
from .dynamics import (
    ContainmentViolation,
    MaterialParams,
    MotionModel,
    NoiseSpec,
    asymmetric_target_cgpt,
    clean_msr,
    disk_cgpt,
    ellipse_like_cgpt,
    generate_msr_stream,
    load_cgpt_json,
    make_rng,
    msr_noise_std,
    simulate_contained_trajectory,
)
from .reconstruct import (
    RegularizationGrid,
    leading_block_error,
    select_mu,
    solve_least_squares,
)
from .tracker import FilterError, GaussianBelief, ObservationModel, run_tracker

logger = logging.getLogger(__name__)

STATE_NAMES = ("vx", "vy", "x", "y", "theta")
TRACK_HEADER = (("t", "x_est", "y_est", "theta_est", "x_true", "y_true", "theta_true")
                + tuple(f"var_{n}" for n in STATE_NAMES))
TRAJECTORY_HEADER = ("t",) + STATE_NAMES


# ---------------------------------------------------------------- CSV output

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".16e")


def write_csv(path, header: Sequence[str], rows, config: ExperimentConfig | None = None,
              seed=None) -> Path:
    """Write rows with the footer described in the module docstring."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        lines.append(",".join(_fmt(v) for v in row))
    if config is not None:
        lines.append(f"# config_sha256={config.sha256()}")
        lines.append(f"# seed={seed if not isinstance(seed, (list, tuple)) else ' '.join(map(str, seed))}")
        lines.append(f"# config={config.canonical_json()}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Header and float rows of a CSV written by :func:`write_csv` (comments skipped)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty CSV")
    header = lines[0].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]], dtype=float)
    return header, data.reshape(-1, len(header))


def read_msr_csv(path, n=None) -> np.ndarray:
    """An MSR matrix stored as ``N`` comma-separated rows of ``N`` values."""
    try:
        V = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except ValueError as exc:
        raise ValueError(f"{path}: not a numeric matrix ({exc})") from None
    return check_msr(V, n)


def write_msr_csv(path, V):
    V = check_msr(V)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        for row in V:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


# ---------------------------------------------------------------- targets

def reference_target(config: ExperimentConfig, K: int) -> np.ndarray:
    kappa = config.material.kappa
    name = config.target
    if name == "asymmetric":
        return asymmetric_target_cgpt(K, kappa)
    if name == "ellipse":
        return ellipse_like_cgpt(K, kappa)
    if name == "disk":
        return disk_cgpt(1.0, MaterialParams(kappa), K)
    M = load_cgpt_json(name)
    if M.shape[0] < 2 * K:
        raise ValueError(f"{name}: CGPT of order {M.shape[0] // 2} < required {K}")
    return M[:2 * K, :2 * K]


# ---------------------------------------------------------------- tracking

@dataclass
class TrackingResult:
    """Ground truth and filter output of one tracking run."""

    times: np.ndarray
    truth: np.ndarray
    estimates: np.ndarray
    variances: np.ndarray
    clamped: int = 0
    attempt: int = 0
    error: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None

    def rmse(self, tail: float = 0.25):
        """Position and wrapped-orientation RMSE over the final ``tail`` of frames."""
        if not self.ok:
            return np.inf, np.inf
        q = int(np.floor(len(self.times) * (1 - tail)))
        dz = self.estimates[q:, 2:4] - self.truth[q:, 2:4]
        dth = np.angle(np.exp(1j * (self.estimates[q:, 4] - self.truth[q:, 4])))
        return float(np.sqrt(np.mean(np.sum(dz**2, axis=1)))), float(np.sqrt(np.mean(dth**2)))


def tracking_trial(geom: AcquisitionGeometry, M_data: np.ndarray, K_track: int,
                   motion: MotionModel, X0, init_mean, init_cov, noise_level: float,
                   seed: int, steps: int) -> TrackingResult:
    """Simulate a contained trajectory and its MSR stream, then run the EKF.

    The trajectory uses the ``"trajectory"`` sub-streams of ``seed`` and the
    measurement noise its ``"measurement"`` sub-stream.  The EKF knows the
    per-frame noise std and the first ``K_track`` orders of ``M_data``.
    Filter failures are recorded in ``error`` instead of raised.
    """
    states, attempt = simulate_contained_trajectory(motion, X0, steps, geom, seed)
    truth = np.array(states)
    frames = generate_msr_stream(M_data, states, geom, noise=NoiseSpec(noise_level, seed))
    stds = np.array([msr_noise_std(clean_msr(M_data, X, geom), noise_level) for X in states])
    # noiseless runs still need a positive R
    stds = np.maximum(stds, 1e-12 * max(float(stds.max()), 1.0))
    model = ObservationModel(M_data[:2 * K_track, :2 * K_track], geom)
    init = GaussianBelief(np.asarray(init_mean, float), np.asarray(init_cov, float))
    times = motion.dtau * np.arange(1, steps + 1)
    try:
        beliefs = run_tracker(frames, model, motion, init, stds)
    except (FilterError, ContainmentViolation) as exc:
        logger.warning("tracking failed: %s", exc)
        nan = np.full_like(truth, np.nan)
        return TrackingResult(times, truth, nan, nan, attempt=attempt, error=str(exc))
    est = np.array([b.mean for b in beliefs])
    var = np.array([np.diag(b.cov) for b in beliefs])
    return TrackingResult(times, truth, est, var, sum(b.clamped for b in beliefs), attempt)


def _track_rows(res: TrackingResult):
    for t, e, x, v in zip(res.times, res.estimates, res.truth, res.variances):
        yield (t, e[2], e[3], e[4], x[2], x[3], x[4], *v)


def _trajectory_rows(res: TrackingResult):
    for t, x in zip(res.times, res.truth):
        yield (t, *x)


def _motion(config: ExperimentConfig) -> MotionModel:
    m = config.motion
    return MotionModel(m.sigma_a, m.sigma_theta, m.dtau)


def _tag(x: float) -> str:
    return format(x, "g").replace(".", "p")


def _tracking_runs(config: ExperimentConfig, layouts: dict, scales: Sequence[float], out: Path):
    K_data, K_track = config.orders.k_data, config.orders.k_track
    M_data = reference_target(config, K_data)
    motion = _motion(config)
    P0 = np.diag(config.initial_cov_diag)
    summary, paths = [], []
    for name, base in layouts.items():
        for delta in scales:
            geom = replace(base, delta=float(delta))
            for p in config.noise_levels:
                for seed in config.seeds:
                    res = tracking_trial(geom, M_data, K_track, motion, config.initial_state,
                                         config.initial_guess, P0, p, seed, config.steps)
                    stem = f"{name}_scale{_tag(delta)}_noise{_tag(p)}_seed{seed}"
                    if res.ok:
                        paths.append(write_csv(out / f"track_{stem}.csv", TRACK_HEADER,
                                               _track_rows(res), config, seed))
                    paths.append(write_csv(out / f"trajectory_{stem}.csv", TRAJECTORY_HEADER,
                                           _trajectory_rows(res), config, seed))
                    pos, ori = res.rmse()
                    summary.append((name, delta, p, seed, pos, ori, res.clamped, res.attempt,
                                    "ok" if res.ok else "failed"))
    paths.append(write_csv(out / "summary.csv",
                           ("layout", "scale", "noise", "seed", "position_rmse", "orientation_rmse",
                            "clamped_frames", "rejections", "status"),
                           summary, config, list(config.seeds)))
    return paths


def run_track_fullview(config: ExperimentConfig, out: Path):
    g = config.geometry
    geom = AcquisitionGeometry.uniform(g.n, g.radius, g.delta)
    return _tracking_runs(config, {"fullview": geom}, config.target_scales or [g.delta], out)


def run_track_limited(config: ExperimentConfig, out: Path):
    """Uniform arc of aperture ``gamma`` versus grouped arrays, same sensor count."""
    g = config.geometry
    groups = g.groups if g.groups is not None else balanced_groups(g.n)
    layouts = {
        "uniform": AcquisitionGeometry.uniform(g.n, g.radius, g.delta, g.gamma),
        "grouped": AcquisitionGeometry.grouped(groups, g.radius, g.delta),
    }
    return _tracking_runs(config, layouts, config.target_scales or [g.delta], out)


# ---------------------------------------------------------------- spectra

def run_spectrum(config: ExperimentConfig, out: Path):
    """Eigenvalue curves of ``C^T C`` and ``D C^T C D`` per aperture, and
    condition numbers of the operator per order."""
    g = config.geometry
    K = config.orders.k_data
    eig_rows, cond_rows, sv_rows = [], [], []
    for gamma in config.gammas:
        geom = AcquisitionGeometry.uniform(g.n, g.radius, g.delta, gamma)
        ctc, dctcd, _ = gram_spectra(geom, K, config.dps)
        for i, (a, b) in enumerate(zip(ctc, dctcd), start=1):
            eig_rows.append((gamma, i, a, b))
        for k in range(1, K + 1):
            rep = limitedview_spectrum(geom, k, config.dps)
            cond_rows.append((gamma, k, rep.log10_condition, rep.numerically_singular))
        if geom.is_full_view:
            ref = fullview_singular_values(g.n, geom.rho, K)
            num = limitedview_spectrum(geom, K, config.dps)
            for i, (a, b) in enumerate(zip(ref.singular_values, num.singular_values), start=1):
                sv_rows.append((i, a, b))
    paths = [
        write_csv(out / "spectrum_eigenvalues.csv", ("gamma", "index", "ctc", "dctcd"),
                  eig_rows, config, list(config.seeds)),
        write_csv(out / "spectrum_condition.csv",
                  ("gamma", "K", "log10_condition", "numerically_singular"),
                  cond_rows, config, list(config.seeds)),
    ]
    if sv_rows:
        paths.append(write_csv(out / "spectrum_fullview_singular_values.csv",
                               ("index", "closed_form", "numerical"), sv_rows, config,
                               list(config.seeds)))
    return paths


# ---------------------------------------------------------------- reconstruction

def recon_trial(M_true, geom: AcquisitionGeometry, K: int, noise_level: float, seed: int,
                grid: RegularizationGrid):
    """First-two-order errors of best-grid Tikhonov and plain least squares.

    The noise draw uses the ``"measurement"`` sub-stream of ``seed``.
    """
    V = apply_forward(M_true, geom)
    rng = make_rng(seed, "measurement")
    V = V + msr_noise_std(V, noise_level) * rng.standard_normal(V.shape)
    mu, err_tik = select_mu(V, geom, K, M_true, grid)
    err_ls = leading_block_error(solve_least_squares(V, geom, K), M_true)
    return mu, err_tik, err_ls


def run_recon_vs_aperture(config: ExperimentConfig, out: Path):
    g = config.geometry
    K = config.orders.k_data
    M_true = reference_target(config, K)
    grid = RegularizationGrid(tuple(config.mu_grid.values()))
    rows, summary = [], []
    for gamma in config.gammas:
        geom = AcquisitionGeometry.uniform(g.n, g.radius, g.delta, gamma)
        for p in config.noise_levels:
            errs = []
            for seed in config.seeds:
                mu, e_tik, e_ls = recon_trial(M_true, geom, K, p, seed, grid)
                rows.append((gamma, p, seed, mu, e_tik, e_ls))
                errs.append((e_tik, e_ls))
            errs = np.array(errs)
            summary.append((gamma, p, *errs.mean(0), *errs.std(0)))
    return [
        write_csv(out / "recon_errors.csv",
                  ("gamma", "noise", "seed", "mu", "error_tikhonov", "error_lstsq"),
                  rows, config, list(config.seeds)),
        write_csv(out / "recon_summary.csv",
                  ("gamma", "noise", "mean_tikhonov", "mean_lstsq", "std_tikhonov", "std_lstsq"),
                  summary, config, list(config.seeds)),
    ]


RUNNERS = {
    "spectrum": run_spectrum,
    "recon-vs-aperture": run_recon_vs_aperture,
    "track-fullview": run_track_fullview,
    "track-limited": run_track_limited,
}


def run_experiment(config: ExperimentConfig, out=None) -> list[Path]:
    """Run ``config.experiment`` and return the CSV files written."""
    out = Path(config.out if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    return RUNNERS[config.experiment](config, out)


__all__ = [
    "TrackingResult", "tracking_trial", "recon_trial", "run_experiment", "write_csv", "read_csv",
    "read_msr_csv", "write_msr_csv", "reference_target", "TRACK_HEADER", "TRAJECTORY_HEADER",
]
