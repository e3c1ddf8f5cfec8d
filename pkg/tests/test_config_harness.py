import json

import numpy as np
import pytest

from gptrack.acquisition import AcquisitionGeometry, fullview_singular_values
from gptrack.config import (
    ConfigError,
    ExperimentConfig,
    balanced_groups,
    load_config,
    make_config,
)
from gptrack.dynamics import MotionModel, asymmetric_target_cgpt
from gptrack.harness import (
    TRACK_HEADER,
    TRAJECTORY_HEADER,
    read_csv,
    read_msr_csv,
    reference_target,
    run_experiment,
    tracking_trial,
    write_csv,
    write_msr_csv,
)


# ------------------------------------------------------------------ config

def test_spectrum_defaults():
    cfg = make_config({"experiment": "spectrum"})
    assert cfg.geometry.n == 101
    assert cfg.orders.k_data == 50
    assert cfg.geometry.radius / cfg.geometry.delta == pytest.approx(1.2)
    assert cfg.motion.dtau == 0.01 and cfg.steps == 1000


def test_tracking_defaults():
    cfg = make_config({"experiment": "track-fullview"})
    assert cfg.initial_state == pytest.approx((-1, 1, 5, -5, 1.5 * np.pi))
    assert cfg.initial_guess == pytest.approx((0, 0, 10, -0.5, 0))
    assert cfg.noise_levels == [0.1, 0.2]
    assert cfg.motion.sigma_a == 2.0 and cfg.motion.sigma_theta == 0.5
    lim = make_config({"experiment": "track-limited"})
    assert lim.geometry.n == 21 and lim.geometry.gamma == pytest.approx(np.pi)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "nope.json")


def test_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(p)


def test_order_precondition():
    with pytest.raises(ConfigError, match="N >= 2K"):
        make_config({"experiment": "track-fullview", "geometry": {"n": 10},
                     "orders": {"k_data": 6, "k_track": 6}})
    with pytest.raises(ConfigError, match="k_track"):
        make_config({"experiment": "track-fullview", "orders": {"k_data": 2, "k_track": 3}})


def test_field_path_in_errors():
    with pytest.raises(ConfigError) as info:
        make_config({"experiment": "spectrum", "material": {"kappa": -1}})
    assert "material.kappa" in str(info.value)
    with pytest.raises(ConfigError) as info:
        make_config({"experiment": "spectrum", "geometry": {"bogus": 1}})
    assert "geometry.bogus" in str(info.value)
    with pytest.raises(ConfigError, match="experiment"):
        make_config({"experiment": "nope"})


def test_geometry_preconditions():
    with pytest.raises(ConfigError, match="rho"):
        make_config({"experiment": "spectrum", "geometry": {"radius": 0.5}})
    with pytest.raises(ConfigError, match="outside"):
        make_config({"experiment": "track-fullview", "geometry": {"radius": 11.0}})
    with pytest.raises(ConfigError, match="sum"):
        make_config({"experiment": "track-limited",
                     "geometry": {"layout": "grouped", "groups": [[0, 1, 3]]}})


def test_config_roundtrip(tmp_path):
    cfg = make_config({"experiment": "track-limited", "seeds": [3, 4]})
    p = tmp_path / "c.json"
    p.write_text(cfg.model_dump_json())
    again = load_config(p)
    assert again == cfg
    assert again.sha256() == cfg.sha256()
    assert ExperimentConfig.model_validate(json.loads(cfg.model_dump_json())) == cfg


def test_hash_ignores_output_dir():
    a = make_config({"experiment": "spectrum", "out": "x"})
    b = make_config({"experiment": "spectrum", "out": "y"})
    c = make_config({"experiment": "spectrum", "seeds": [1]})
    assert a.sha256() == b.sha256() != c.sha256()


def test_balanced_groups():
    groups = balanced_groups(21)
    assert [g[2] for g in groups] == [5, 4, 4, 4, 4]
    assert [g[0] for g in groups] == pytest.approx([2 * np.pi * g / 5 for g in range(5)])
    assert all(g[1] == pytest.approx(0.2 * np.pi) for g in groups)
    with pytest.raises(ValueError):
        balanced_groups(3)


# ------------------------------------------------------------------ CSV

def test_csv_format(tmp_path):
    cfg = make_config({"experiment": "spectrum"})
    path = write_csv(tmp_path / "a.csv", ("i", "x"), [(1, 0.1), (2, -1 / 3)], cfg, 7)
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "i,x"
    assert lines[1] == "1,1.0000000000000001e-01"
    mantissa = lines[2].split(",")[1].split("e")[0].lstrip("-").replace(".", "")
    assert len(mantissa) >= 15
    assert lines[-3] == f"# config_sha256={cfg.sha256()}"
    assert lines[-2] == "# seed=7"
    assert json.loads(lines[-1][len("# config="):])["experiment"] == "spectrum"
    header, data = read_csv(path)
    assert header == ["i", "x"]
    np.testing.assert_array_equal(data, [[1, 0.1], [2, -1 / 3]])


def test_csv_row_length_checked(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "a.csv", ("a", "b"), [(1,)])


def test_msr_csv_roundtrip(tmp_path, rng):
    V = rng.standard_normal((6, 6))
    path = write_msr_csv(tmp_path / "v.csv", V)
    np.testing.assert_array_equal(read_msr_csv(path, 6), V)
    with pytest.raises(ValueError):
        read_msr_csv(path, 5)


def test_reference_target_from_file(tmp_path):
    from gptrack.dynamics import save_cgpt_json
    p = tmp_path / "m.json"
    save_cgpt_json(p, asymmetric_target_cgpt(3))
    cfg = make_config({"experiment": "track-fullview", "target": str(p)})
    np.testing.assert_array_equal(reference_target(cfg, 2), asymmetric_target_cgpt(2))
    with pytest.raises(ValueError):
        reference_target(cfg, 4)


# ------------------------------------------------------------------ experiments

def _footer(path):
    return [ln for ln in path.read_text().splitlines() if ln.startswith("#")]


def test_track_fullview_run(tmp_path):
    cfg = make_config({"experiment": "track-fullview", "noise_levels": [0.1],
                       "target_scales": [5.0], "out": str(tmp_path / "a")})
    paths = run_experiment(cfg)
    track = next(p for p in paths if p.name.startswith("track_"))
    header, data = read_csv(track)
    assert tuple(header) == TRACK_HEADER
    assert data.shape[0] == 1000
    _, traj = read_csv(next(p for p in paths if p.name.startswith("trajectory_")))
    assert tuple(_) == TRAJECTORY_HEADER
    for p in paths:
        foot = _footer(p)
        assert foot[0].startswith("# config_sha256=") and foot[1].startswith("# seed=")
    again = run_experiment(cfg.model_copy(update={"out": str(tmp_path / "b")}))
    for p, q in zip(paths, again):
        assert p.read_bytes() == q.read_bytes()


def test_initial_state_recorded():
    cfg = make_config({"experiment": "track-fullview"})
    geom = AcquisitionGeometry.uniform(20, 15.0, 5.0)
    res = tracking_trial(geom, asymmetric_target_cgpt(5), 2, MotionModel(), cfg.initial_state,
                         cfg.initial_guess, np.diag(cfg.initial_cov_diag), 0.1, 0, 5)
    assert res.ok and len(res.truth) == 5
    # the first frame is one step after the initial state
    x0 = np.array(cfg.initial_state)
    assert np.abs(res.truth[0][2:4] - x0[2:4]).max() < 0.1


def test_tracking_trial_records_failure(monkeypatch):
    from gptrack import harness
    from gptrack.tracker import FilterError

    def failing(*args, **kwargs):
        raise FilterError("singular", 3)

    monkeypatch.setattr(harness, "run_tracker", failing)
    geom = AcquisitionGeometry.uniform(20, 15.0, 5.0)
    res = tracking_trial(geom, asymmetric_target_cgpt(5), 2, MotionModel(), (0, 0, 5.0, 0, 0),
                         (0, 0, 0, 0, 0), np.eye(5), 0.1, 0, 5)
    assert not res.ok and "frame 3" in res.error
    assert res.rmse() == (np.inf, np.inf)


def test_tracking_trial_rejects_outside_start():
    from gptrack.dynamics import ContainmentViolation
    geom = AcquisitionGeometry.uniform(20, 15.0, 5.0)
    with pytest.raises(ContainmentViolation):
        tracking_trial(geom, asymmetric_target_cgpt(5), 2, MotionModel(), (0, 0, 10.5, 0, 0),
                       (0, 0, 0, 0, 0), np.eye(5), 0.1, 0, 5)


def test_spectrum_experiment(tmp_path):
    cfg = make_config({"experiment": "spectrum", "geometry": {"n": 20, "radius": 2.0},
                       "orders": {"k_data": 5}, "gammas": [2 * np.pi, np.pi],
                       "out": str(tmp_path)})
    paths = run_experiment(cfg)
    _, sv = read_csv(tmp_path / "spectrum_fullview_singular_values.csv")
    ref = fullview_singular_values(20, 2.0, 5).singular_values
    np.testing.assert_allclose(sv[:, 1], ref, rtol=1e-15)
    np.testing.assert_allclose(sv[:, 2], ref, rtol=1e-10)
    _, cond = read_csv(tmp_path / "spectrum_condition.csv")
    full = cond[(cond[:, 0] == cond[0, 0]) & (cond[:, 1] == 5)]
    assert full[0, 2] == pytest.approx(np.log10(6400), rel=1e-10)
    _, eig = read_csv(tmp_path / "spectrum_eigenvalues.csv")
    assert eig.shape == (20, 4)
    assert len(paths) == 3


def test_recon_experiment(tmp_path):
    cfg = make_config({"experiment": "recon-vs-aperture", "gammas": [np.pi, 2 * np.pi],
                       "seeds": [0, 1], "noise_levels": [0.01], "out": str(tmp_path)})
    run_experiment(cfg)
    header, rows = read_csv(tmp_path / "recon_errors.csv")
    assert header == ["gamma", "noise", "seed", "mu", "error_tikhonov", "error_lstsq"]
    assert rows.shape == (4, 6)
    assert np.all(np.isfinite(rows)) and np.all(rows[:, 4:] > 0)
    assert np.all((rows[:, 3] >= 1e-6 * (1 - 1e-12)) & (rows[:, 3] <= 1e-1 * (1 + 1e-12)))
    _, summary = read_csv(tmp_path / "recon_summary.csv")
    assert summary.shape == (2, 6)


def test_track_limited_layouts(tmp_path):
    cfg = make_config({"experiment": "track-limited", "motion": {"duration": 0.05},
                       "out": str(tmp_path)})
    run_experiment(cfg)
    names = sorted(p.name for p in tmp_path.glob("track_*.csv"))
    assert names == ["track_grouped_scale5_noise0p1_seed0.csv",
                     "track_uniform_scale5_noise0p1_seed0.csv"]
    lines = [ln for ln in (tmp_path / "summary.csv").read_text().splitlines()
             if not ln.startswith("#")]
    assert len(lines) == 3
