"""scikit-learn style wrappers around reconstruction and tracking."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .acquisition import AcquisitionGeometry, apply_forward, check_cgpt, order_of
from .dynamics import MotionModel
from .reconstruct import noiseless_inversion, solve_least_squares, solve_tikhonov
from .tracker import DEFAULT_INITIAL_COV, GaussianBelief, ObservationModel, run_tracker

METHODS = ("lstsq", "tikhonov", "left-inverse")


def _geometry(est) -> AcquisitionGeometry:
    if est.angles is not None:
        return AcquisitionGeometry(np.asarray(est.angles, dtype=float), est.radius, est.delta)
    return AcquisitionGeometry.uniform(est.n_receivers, est.radius, est.delta, est.gamma)


def _as_msr_batch(X, n):
    X = np.asarray(X, dtype=float)
    if X.ndim == 2 and X.shape == (n, n):
        X = X[None]
    if X.ndim == 2:
        if X.shape[1] != n * n:
            raise ValueError(f"expected {n * n} features (a flattened {n}x{n} MSR), got {X.shape[1]}")
        X = X.reshape(-1, n, n)
    if X.ndim != 3 or X.shape[1:] != (n, n):
        raise ValueError(f"expected MSR batch of shape (n_samples, {n}, {n}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("MSR data must be finite")
    return X


class CGPTReconstructor(TransformerMixin, BaseEstimator):
    """Recover order-``order`` CGPTs from MSR matrices.

    Parameters
    ----------
    n_receivers : int
        Number of coincident sources/receivers (ignored if ``angles`` given).
    radius, delta : float
        Ring radius and target scale.
    gamma : float
        Aperture of the uniform layout.
    angles : array-like, optional
        Explicit receiver angles in (0, 2 pi], strictly increasing.
    order : int
        CGPT order ``K`` to reconstruct.
    method : {"lstsq", "tikhonov", "left-inverse"}
        Minimal-norm least squares, Tikhonov with weight ``mu``, or the
        explicit left inverse (noise-free data only).
    mu : float
        Tikhonov weight.
    dps : int, optional
        Decimal precision of the left-inverse path.

    Notes
    -----
    ``transform`` maps a batch of MSR matrices (``(n, N, N)`` or flattened
    ``(n, N*N)``) to flattened ``2K x 2K`` CGPTs; ``inverse_transform``
    applies the forward operator.
    """

    def __init__(self, n_receivers=20, radius=2.0, delta=1.0, gamma=2 * np.pi, angles=None,
                 order=2, method="lstsq", mu=1e-3, dps=None):
        self.n_receivers = n_receivers
        self.radius = radius
        self.delta = delta
        self.gamma = gamma
        self.angles = angles
        self.order = order
        self.method = method
        self.mu = mu
        self.dps = dps

    def fit(self, X=None, y=None):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method == "tikhonov" and not self.mu > 0:
            raise ValueError("mu must be positive")
        geom = _geometry(self)
        min_n = 2 * self.order + (self.method == "left-inverse")
        if self.order < 1 or geom.n < min_n:
            raise ValueError(f"{self.method} needs N >= {min_n} for order {self.order}")
        self.geometry_ = geom
        self.n_features_in_ = geom.n**2
        if X is not None:
            _as_msr_batch(X, geom.n)
        return self

    def _solve(self, V):
        if self.method == "lstsq":
            return solve_least_squares(V, self.geometry_, self.order)
        if self.method == "tikhonov":
            return solve_tikhonov(V, self.geometry_, self.order, self.mu)
        return np.asarray(noiseless_inversion(V, self.geometry_, self.order, self.dps), dtype=float)

    def transform(self, X):
        check_is_fitted(self, "geometry_")
        batch = _as_msr_batch(X, self.geometry_.n)
        return np.stack([self._solve(V).ravel() for V in batch])

    def inverse_transform(self, Z):
        check_is_fitted(self, "geometry_")
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        k = 2 * self.order
        if Z.shape[-1] != k * k:
            raise ValueError(f"expected {k * k} CGPT entries per sample, got {Z.shape[-1]}")
        n = self.geometry_.n
        return np.stack([apply_forward(z.reshape(k, k), self.geometry_).reshape(n * n) for z in Z])


class EKFTracker(BaseEstimator):
    """Track position and orientation of a known target from an MSR stream.

    Parameters
    ----------
    target_cgpt : ndarray
        Reference CGPT ``M_D`` of the unit-scale target (order ``K_track``).
    n_receivers, radius, delta, gamma, angles :
        Acquisition geometry, as in :class:`CGPTReconstructor`.
    sigma_a, sigma_theta, dtau : float
        Motion model.
    noise_std : float or array-like
        Measurement noise std, scalar or one value per frame.
    initial_mean : array-like of length 5
        Initial guess ``(vx, vy, x, y, theta)``.
    initial_cov : array-like, optional
        Initial covariance (default ``diag(1, 1, 25, 25, pi^2)``).
    """

    def __init__(self, target_cgpt=None, n_receivers=20, radius=15.0, delta=5.0,
                 gamma=2 * np.pi, angles=None, sigma_a=2.0, sigma_theta=0.5, dtau=0.01,
                 noise_std=1.0, initial_mean=(0.0, 0.0, 10.0, -0.5, 0.0), initial_cov=None):
        self.target_cgpt = target_cgpt
        self.n_receivers = n_receivers
        self.radius = radius
        self.delta = delta
        self.gamma = gamma
        self.angles = angles
        self.sigma_a = sigma_a
        self.sigma_theta = sigma_theta
        self.dtau = dtau
        self.noise_std = noise_std
        self.initial_mean = initial_mean
        self.initial_cov = initial_cov

    def fit(self, X=None, y=None):
        """Validate the parameters; with a stream ``X`` also filter it."""
        if self.target_cgpt is None:
            raise ValueError("target_cgpt is required")
        M = check_cgpt(self.target_cgpt)
        geom = _geometry(self)
        stds = np.atleast_1d(np.asarray(self.noise_std, dtype=float))
        self.model_ = ObservationModel(M, geom, float(stds[0]))
        self.motion_ = MotionModel(self.sigma_a, self.sigma_theta, self.dtau)
        cov = DEFAULT_INITIAL_COV if self.initial_cov is None else np.asarray(self.initial_cov, float)
        self.init_ = GaussianBelief(np.asarray(self.initial_mean, dtype=float), cov)
        self.order_ = order_of(M)
        self.n_features_in_ = geom.n**2
        if X is not None:
            self.beliefs_ = self._filter(X)
        return self

    def _filter(self, X):
        n = self.model_.geom.n
        stream = _as_msr_batch(X, n)
        stds = np.atleast_1d(np.asarray(self.noise_std, dtype=float))
        per_frame = None
        if stds.size > 1:
            if stds.size != len(stream):
                raise ValueError("noise_std must be a scalar or have one entry per frame")
            per_frame = stds
        return run_tracker(list(stream), self.model_, self.motion_, self.init_, per_frame)

    def predict(self, X):
        """Filtered state means, shape ``(n_frames, 5)``."""
        check_is_fitted(self, "model_")
        return np.array([b.mean for b in self._filter(X)])

    def predict_cov(self, X):
        check_is_fitted(self, "model_")
        return np.array([b.cov for b in self._filter(X)])
