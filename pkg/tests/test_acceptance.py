"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line (listed again in the terminal summary)
before asserting, so a failing criterion still reports its measurements.
"""

import logging
import time

import numpy as np
import pytest

from gptrack.acquisition import (
    AcquisitionGeometry,
    apply_forward,
    coefficient_matrix,
    fullview_singular_values,
    limitedview_spectrum,
    operator_matrix,
    pinv_apply,
)
from gptrack.config import balanced_groups
from gptrack.dynamics import (
    MotionModel,
    asymmetric_target_cgpt,
    ellipse_like_cgpt,
    process_covariance,
    simulate_trajectory,
    transition_matrix,
)
from gptrack.harness import recon_trial, tracking_trial
from gptrack.reconstruct import (
    RegularizationGrid,
    coefficient_matrix_from_angles,
    left_inverse,
    left_inverse_sum,
    noiseless_inversion,
)
from gptrack.tracker import GaussianBelief, ObservationModel, ekf_step, kf_step, observe, observe_jacobian

SEEDS = range(10)
X0 = (-1.0, 1.0, 5.0, -5.0, 1.5 * np.pi)
GUESS = (0.0, 0.0, 10.0, -0.5, 0.0)
P0 = np.diag([1.0, 1.0, 25.0, 25.0, np.pi**2])
STEPS = 1000


def sorted_angles(rng, n, gap=0.1):
    while True:
        a = np.sort(rng.uniform(0.01, 2 * np.pi, n))
        if np.diff(np.concatenate([a, [a[0] + 2 * np.pi]])).min() > gap:
            return a


# ------------------------------------------------------------------ 1

def test_criterion_01_fullview_svd(criterion):
    t = time.perf_counter()
    g = AcquisitionGeometry.uniform(20, 2.0)
    numeric = np.linalg.svd(operator_matrix(g, 5), compute_uv=False)
    rep = fullview_singular_values(20, 2.0, 5)
    cond = numeric[0] / numeric[-1]
    elapsed = time.perf_counter() - t
    sv_err = np.abs(numeric / rep.singular_values - 1).max()
    cond_err = abs(cond / 6400 - 1)
    ok = sv_err < 1e-10 and cond_err < 1e-8 and abs(rep.condition_number / 6400 - 1) < 1e-8 \
        and elapsed < 1
    criterion(1, ok, f"sv rel err {sv_err:.1e}, cond {cond:.10g} (rel err {cond_err:.1e}), "
                     f"{elapsed:.3f} s")
    assert ok


# ------------------------------------------------------------------ 2

@pytest.mark.xfail(strict=True, reason="at K = N/2 = 10 the sin(10 theta) column vanishes on the "
                                       "20 uniform nodes, so C^T C cannot equal (N/2) I")
def test_criterion_02_orthogonality(criterion):
    g = AcquisitionGeometry.uniform(20, 2.0)
    errs = {}
    for K in range(1, 11):
        C = coefficient_matrix(g, K)
        errs[K] = np.abs(C.T @ C - 10 * np.eye(2 * K)).max()
    bad = [K for K, e in errs.items() if e > 1e-12]
    ok = not bad
    worst_ok = max(e for K, e in errs.items() if K not in bad)
    criterion(2, ok, f"K<=9 max err {worst_ok:.1e}; fails for K={bad} "
                     f"(err {max(errs[K] for K in bad) if bad else 0:.1f}, Nyquist aliasing)")
    assert ok


# ------------------------------------------------------------------ 3

def test_criterion_03_order_consistency(criterion):
    g = AcquisitionGeometry.uniform(20, 2.0)
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        V = rng.standard_normal((20, 20))
        worst = max(worst, np.abs(pinv_apply(V, g, 5)[:4, :4] - pinv_apply(V, g, 2)).max())
    ok = worst < 1e-10
    criterion(3, ok, f"max |M5[:4,:4] - M2| = {worst:.1e} over 20 draws")
    assert ok


# ------------------------------------------------------------------ 4

def test_criterion_04_left_inverse(criterion):
    rng = np.random.default_rng(4)
    err = {}
    for n in (7, 8):
        a = sorted_angles(rng, n)
        err[n] = np.abs(left_inverse(a, 3) @ coefficient_matrix_from_angles(a, 3) - np.eye(6)).max()
    a = sorted_angles(rng, 7)
    sum_err = np.abs(left_inverse_sum(a, 3) - left_inverse(a, 3)).max()
    ok = err[7] < 1e-8 and err[8] < 1e-8 and sum_err < 1e-10
    criterion(4, ok, f"|CtC - I| N=7 {err[7]:.1e}, N=8 {err[8]:.1e}; "
                     f"sum vs quadrature {sum_err:.1e}")
    assert ok


# ------------------------------------------------------------------ 5

def test_criterion_05_noiseless_limited_view(criterion):
    g = AcquisitionGeometry.uniform(21, 2.0, gamma=np.pi)
    rng = np.random.default_rng(5)
    A = rng.standard_normal((6, 6))
    M = (A + A.T) / 2
    # exact data and kernels carried in 50-digit arithmetic
    est = noiseless_inversion(apply_forward(M, g, dps=50), g, 3, dps=50)
    rel = np.linalg.norm(est - M) / np.linalg.norm(M)
    # the same formula in float64 loses everything to rounding
    rel64 = np.linalg.norm(noiseless_inversion(apply_forward(M, g), g, 3) - M) / np.linalg.norm(M)
    ok = rel < 1e-6
    criterion(5, ok, f"rel err {rel:.1e} at 50 digits (float64 path: {rel64:.1e})")
    assert ok


# ------------------------------------------------------------------ 6

def test_criterion_06_conditioning_monotone(criterion):
    t = time.perf_counter()
    gammas = (2 * np.pi, 1.5 * np.pi, np.pi, 0.5 * np.pi)
    logc = [limitedview_spectrum(AcquisitionGeometry.uniform(101, 1.2, gamma=gm), 10, dps=50)
            .log10_condition for gm in gammas]
    big = limitedview_spectrum(AcquisitionGeometry.uniform(1001, 1.2, gamma=np.pi / 2), 10, dps=50)
    big64 = limitedview_spectrum(AcquisitionGeometry.uniform(1001, 1.2, gamma=np.pi / 2), 10)
    elapsed = time.perf_counter() - t
    increasing = all(b > a for a, b in zip(logc, logc[1:]))
    ratio = 10 ** (big.log10_condition - logc[-1])
    ok = increasing and 0.1 <= ratio <= 10 and elapsed < 30
    criterion(6, ok, "log10 cond " + ", ".join(f"{c:.3f}" for c in logc)
              + f"; N=1001 ratio {ratio:.3f} (float64 path "
              + ("singular" if big64.numerically_singular else f"{big64.log10_condition:.3f}")
              + f"), {elapsed:.1f} s")
    assert ok


# ------------------------------------------------------------------ 7

def test_criterion_07_regularization_benefit(criterion):
    g = AcquisitionGeometry.uniform(101, 1.2, gamma=np.pi / 2)
    M = ellipse_like_cgpt(5)
    grid = RegularizationGrid()
    wins, pairs = 0, []
    for seed in SEEDS:
        _, tik, ls = recon_trial(M, g, 5, 0.1, seed, grid)
        wins += tik <= ls
        pairs.append((tik, ls))
    ok = wins >= 8
    tik, ls = np.mean(pairs, axis=0)
    criterion(7, ok, f"Tikhonov <= LS in {wins}/10 seeds (mean {tik:.3g} vs {ls:.3g})")
    assert ok


# ------------------------------------------------------------------ 8

def test_criterion_08_jacobian(criterion):
    geom = AcquisitionGeometry.uniform(20, 15.0, 5.0)
    model = ObservationModel(asymmetric_target_cgpt(2), geom, 1.0)
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(20):
        r, a = 9.0 * np.sqrt(rng.uniform()), rng.uniform(0, 2 * np.pi)
        X = np.array([*rng.standard_normal(2), r * np.cos(a), r * np.sin(a), rng.uniform(-7, 7)])
        H = observe_jacobian(X, model)
        for j in range(5):
            e = np.zeros(5)
            e[j] = 1e-6
            fd = (observe(X + e, model) - observe(X - e, model)) / 2e-6
            scale = np.abs(H[:, j]).max() or 1.0
            worst = max(worst, np.abs(fd - H[:, j]).max() / scale)
    ok = worst < 1e-5
    criterion(8, ok, f"max rel err {worst:.1e} over 20 states")
    assert ok


# ------------------------------------------------------------------ 9

def test_criterion_09_motion_statistics(criterion):
    m = MotionModel(2.0, 0.5, 0.01)
    n = 100_000
    states = np.array(simulate_trajectory(m, np.zeros(5), n, 9))
    prev = np.vstack([np.zeros(5), states[:-1]])
    U = states - prev @ transition_matrix(m).T
    S = process_covariance(m)
    C = U.T @ U / n
    nz = S != 0
    rel = np.abs(C[nz] / S[nz] - 1).max()
    # entries that vanish in Sigma are compared as correlations
    d = np.sqrt(np.diag(S))
    corr = np.abs(C[~nz] / np.outer(d, d)[~nz]).max()
    ok = rel < 0.05 and corr < 0.05
    criterion(9, ok, f"max rel err {rel:.3f} on nonzero entries, max |corr| {corr:.3f} on zeros")
    assert ok


# ------------------------------------------------------------------ 10-12 tracking

@pytest.fixture(scope="module")
def fullview_runs():
    logging.disable(logging.WARNING)
    try:
        geom = AcquisitionGeometry.uniform(20, 15.0, 5.0)
        M = asymmetric_target_cgpt(5)
        t = time.perf_counter()
        out = {p: [tracking_trial(geom, M, 2, MotionModel(), X0, GUESS, P0, p, s, STEPS)
                   for s in SEEDS] for p in (0.1, 0.2)}
        out["elapsed"] = time.perf_counter() - t
        return out
    finally:
        logging.disable(logging.NOTSET)


def test_criterion_10_tracking_convergence(criterion, fullview_runs):
    init_err = np.hypot(GUESS[2] - X0[2], GUESS[3] - X0[3])
    rmse = [r.rmse() for r in fullview_runs[0.1]]
    passed = [pos < 0.1 * init_err and ori < 0.2 for pos, ori in rmse]
    # half of the runs belong to criterion 11
    elapsed = fullview_runs["elapsed"] / 2
    ok = sum(passed) >= 8 and elapsed < 120
    failed = [s for s, p in zip(SEEDS, passed) if not p]
    criterion(10, ok, f"{sum(passed)}/10 seeds (position < {0.1 * init_err:.3f}, orientation < 0.2); "
                      f"median position {np.median([r[0] for r in rmse]):.3f}, orientation "
                      f"{np.median([r[1] for r in rmse]):.3f}; failed seeds {failed}; {elapsed:.0f} s")
    assert ok


def test_criterion_11_noise_degradation(criterion, fullview_runs):
    lo = [r.rmse()[1] for r in fullview_runs[0.1]]
    hi = [r.rmse()[1] for r in fullview_runs[0.2]]
    hits = sum(h >= l for l, h in zip(lo, hi))
    ok = hits >= 8
    criterion(11, ok, f"20% >= 10% orientation RMSE in {hits}/10 seeds "
                      f"(median {np.median(hi):.4f} vs {np.median(lo):.4f})")
    assert ok


def test_criterion_12_directional_diversity(criterion):
    logging.disable(logging.WARNING)
    try:
        M = asymmetric_target_cgpt(5)
        uniform = AcquisitionGeometry.uniform(21, 40.0, 5.0, np.pi)
        grouped = AcquisitionGeometry.grouped(balanced_groups(21), 40.0, 5.0)
        u = [tracking_trial(uniform, M, 2, MotionModel(), X0, GUESS, P0, 0.1, s, STEPS).rmse()[1]
             for s in SEEDS]
        g = [tracking_trial(grouped, M, 2, MotionModel(), X0, GUESS, P0, 0.1, s, STEPS).rmse()[1]
             for s in SEEDS]
    finally:
        logging.disable(logging.NOTSET)
    hits = sum(b < a for a, b in zip(u, g))
    ok = hits >= 8
    criterion(12, ok, f"grouped < uniform orientation RMSE in {hits}/10 seeds "
                      f"(median {np.median(g):.3f} vs {np.median(u):.3f})")
    assert ok


# ------------------------------------------------------------------ 13

def test_criterion_13_filter_reductions(criterion):
    rng = np.random.default_rng(13)
    geom = AcquisitionGeometry.uniform(20, 15.0, 5.0)
    model = ObservationModel(asymmetric_target_cgpt(2), geom, 2.0)
    n = geom.n**2
    H = rng.standard_normal((n, 5))
    c = rng.standard_normal(n)
    A = rng.standard_normal((5, 5))
    b = GaussianBelief(rng.standard_normal(5), A @ A.T + np.eye(5))
    m = MotionModel()
    F, Q = transition_matrix(m), process_covariance(m)
    V = rng.standard_normal((geom.n, geom.n))
    ekf = ekf_step(b, F, Q, model, V, observation=lambda X, _: H @ X + c, jacobian=lambda X, _: H)
    kf = kf_step(b, F, Q, H, model.noise_var * np.eye(n), V.ravel() - c)
    ekf_err = max(np.abs(ekf.mean - kf.mean).max(), np.abs(ekf.cov - kf.cov).max())

    # 3-step random walk observed in noise versus direct Gaussian conditioning
    m0, p0, q, r = 0.3, 2.0, 0.5, 0.7
    ys = np.array([1.1, -0.4, 0.9])
    t = np.arange(1, 4)
    Cx = p0 + q * np.minimum.outer(t, t)
    Cy = Cx + r * np.eye(3)
    belief = GaussianBelief(np.array([m0]), np.array([[p0]]))
    kf_err = 0.0
    for k in range(3):
        belief = kf_step(belief, [[1.0]], [[q]], [[1.0]], [[r]], [ys[k]])
        gain = np.linalg.solve(Cy[:k + 1, :k + 1], Cx[k, :k + 1])
        mean = m0 + gain @ (ys[:k + 1] - m0)
        var = Cx[k, k] - gain @ Cx[k, :k + 1]
        kf_err = max(kf_err, abs(belief.mean[0] - mean), abs(belief.cov[0, 0] - var))
    ok = ekf_err < 1e-12 and kf_err < 1e-10
    criterion(13, ok, f"EKF vs KF {ekf_err:.1e}; KF vs conditioning {kf_err:.1e}")
    assert ok
