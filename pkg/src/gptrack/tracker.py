"""Kalman and extended Kalman filtering of target position and orientation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .acquisition import AcquisitionGeometry, apply_forward, check_cgpt, order_of
from .cgpt import transform_cgpt, transform_partials
from .dynamics import (
    ContainmentViolation,
    MotionModel,
    TargetState,
    check_containment,
    process_covariance,
    transition_matrix,
)

logger = logging.getLogger(__name__)

# state layout (v, z, theta)
POSITION = slice(2, 4)
THETA = 4

DEFAULT_INITIAL_COV = np.diag([1.0, 1.0, 25.0, 25.0, np.pi**2])


class FilterError(RuntimeError):
    """Innovation covariance is singular or the filter diverged."""

    def __init__(self, message, frame=None):
        super().__init__(message if frame is None else f"frame {frame}: {message}")
        self.frame = frame


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray
    clamped: bool = False

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of size {mean.size}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def state(self) -> TargetState:
        return TargetState.from_array(self.mean)


@dataclass(frozen=True, eq=False)
class ObservationModel:
    """``h(X) = vec(L(T_{z, theta}(M_D)))`` for a known reference CGPT."""

    M_D: np.ndarray
    geom: AcquisitionGeometry
    noise_std: float = 1.0

    def __post_init__(self):
        M = check_cgpt(self.M_D)
        if self.geom.n < 2 * order_of(M):
            raise ValueError(f"need N >= 2K (N={self.geom.n}, K={order_of(M)})")
        if not self.noise_std > 0:
            raise ValueError("noise_std must be positive")
        object.__setattr__(self, "M_D", M)

    @property
    def K(self) -> int:
        return order_of(self.M_D)

    @property
    def size(self) -> int:
        return self.geom.n**2

    def noise_cov(self) -> np.ndarray:
        return self.noise_std**2 * np.eye(self.size)

    @property
    def noise_var(self) -> float:
        return self.noise_std**2


def observe(X, model: ObservationModel) -> np.ndarray:
    """Flattened (row-major) noise-free MSR matrix at state ``X``."""
    X = np.asarray(X, dtype=float)
    check_containment(X, model.geom)
    M_t = transform_cgpt(model.M_D, TargetState.from_array(X).motion(model.geom.delta))
    return apply_forward(M_t, model.geom).ravel()


def observe_jacobian(X, model: ObservationModel) -> np.ndarray:
    """``N^2 x 5`` Jacobian of :func:`observe`; velocity columns are zero."""
    X = np.asarray(X, dtype=float)
    check_containment(X, model.geom)
    delta = model.geom.delta
    dx, dy, dth = transform_partials(model.M_D, TargetState.from_array(X).motion(delta))
    H = np.zeros((model.size, 5))
    # translations enter the transform in units of delta
    H[:, 2] = apply_forward(dx, model.geom).ravel() / delta
    H[:, 3] = apply_forward(dy, model.geom).ravel() / delta
    H[:, 4] = apply_forward(dth, model.geom).ravel()
    return H


def _symmetrize(P):
    return (P + P.T) / 2


def predict(belief: GaussianBelief, F, Q) -> GaussianBelief:
    return GaussianBelief(F @ belief.mean, _symmetrize(F @ belief.cov @ F.T + Q))


def update(belief: GaussianBelief, H, R, innovation) -> GaussianBelief:
    """Measurement update from a linear(ized) observation matrix ``H``.

    ``R`` is the observation noise covariance, or a scalar variance for
    ``R = r I``.  In the scalar case the gain ``P H^T (H P H^T + r I)^-1``
    is computed as ``P (H^T H P + r I)^-1 H^T``, which only needs a solve
    in state dimension.
    """
    P = belief.cov
    n = P.shape[0]
    if np.ndim(R) == 0:
        r = float(R)
        if not r > 0:
            raise FilterError(f"observation noise variance must be positive (got {r})")
        A = H.T @ H @ P + r * np.eye(n)
        try:
            gain = P @ np.linalg.solve(A, H.T)
        except np.linalg.LinAlgError as exc:
            raise FilterError(f"innovation covariance is singular: {exc}") from exc
    else:
        PHt = P @ H.T
        S = H @ PHt + R
        try:
            factor = cho_factor(S)
        except LinAlgError as exc:
            raise FilterError(f"innovation covariance is not positive definite: {exc}") from exc
        gain = cho_solve(factor, PHt.T).T
    mean = belief.mean + gain @ innovation
    cov = _symmetrize((np.eye(n) - gain @ H) @ P)
    return GaussianBelief(mean, cov, belief.clamped)


def kf_step(belief: GaussianBelief, F, Q, H, R, y) -> GaussianBelief:
    """One Kalman predict/update cycle for ``X' = F X + W``, ``y = H X' + V``."""
    prior = predict(belief, np.asarray(F, float), np.asarray(Q, float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    R = R if np.ndim(R) == 0 else np.atleast_2d(R)
    return update(prior, H, R, y - H @ prior.mean)


def clamp_to_ring(mean, geom: AcquisitionGeometry, margin=1e-6):
    """Pull the position back inside the admissible disk; returns ``(mean, clamped)``."""
    limit = geom.radius - geom.delta - margin
    r = np.hypot(mean[2], mean[3])
    if r < limit:
        return mean, False
    out = mean.copy()
    out[POSITION] *= limit / r
    return out, True


def ekf_step(belief: GaussianBelief, F, Q, model: ObservationModel, V_t,
             observation=None, jacobian=None) -> GaussianBelief:
    """One extended Kalman cycle on an MSR frame ``V_t``.

    The dynamics are linear, so prediction is exact; the observation is
    linearized at the predicted mean.  ``observation`` / ``jacobian`` can
    replace :func:`observe` / :func:`observe_jacobian` (e.g. for an affine
    test model).  A predicted position outside the admissible disk is
    pulled back onto it and the returned belief has ``clamped=True``.
    """
    h = observe if observation is None else observation
    jac = observe_jacobian if jacobian is None else jacobian
    prior = predict(belief, F, Q)
    clamped = False
    if observation is None:
        mean, clamped = clamp_to_ring(prior.mean, model.geom)
        if clamped:
            logger.warning("predicted position left the measurement circle; clamped")
            prior = replace(prior, mean=mean)
    y = np.asarray(V_t, dtype=float).ravel()
    post = update(prior, jac(prior.mean, model), model.noise_var, y - h(prior.mean, model))
    return replace(post, clamped=clamped)


def run_tracker(stream, model: ObservationModel, motion: MotionModel,
                init: GaussianBelief, noise_stds=None) -> list[GaussianBelief]:
    """Filter a whole MSR stream; returns one posterior per frame.

    ``noise_stds`` optionally gives the measurement noise std of each frame
    (otherwise ``model.noise_std`` is used throughout).
    """
    if len(stream) == 0:
        raise ValueError("empty MSR stream")
    if noise_stds is not None and len(noise_stds) != len(stream):
        raise ValueError("noise_stds must have one entry per frame")
    F = transition_matrix(motion)
    Q = process_covariance(motion)
    beliefs = []
    belief = init
    for t, V in enumerate(stream):
        frame_model = model if noise_stds is None else replace(model, noise_std=float(noise_stds[t]))
        try:
            belief = ekf_step(belief, F, Q, frame_model, V)
        except (FilterError, ContainmentViolation) as exc:
            raise type(exc)(str(exc), t) from exc
        beliefs.append(belief)
    return beliefs
