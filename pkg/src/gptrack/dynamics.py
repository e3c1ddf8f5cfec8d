"""Ground truth: target CGPTs, the random motion model, and MSR data streams.

Positions are physical; CGPTs are those of the reference shape at unit
scale, so a target at ``z`` is seen by the operator through the motion
``z / delta``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .acquisition import AcquisitionGeometry, apply_forward, check_cgpt, order_of
from .cgpt import RigidMotion, transform_cgpt

# named sub-streams of one experiment seed
STREAMS = {"trajectory": 0, "measurement": 1, "initial": 2, "target": 3}


class ContainmentViolation(ValueError):
    """The target is not strictly inside the measurement circle."""

    def __init__(self, message, frame=None):
        super().__init__(message if frame is None else f"frame {frame}: {message}")
        self.frame = frame


def make_rng(seed: int, stream: str = "trajectory", attempt: int = 0) -> np.random.Generator:
    """PCG64 generator for one named sub-stream of ``seed``.

    ``attempt`` indexes independent redraws of the same stream (used by
    rejection sampling).
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[stream], int(attempt)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class MaterialParams:
    kappa: float

    def __post_init__(self):
        if not (self.kappa > 0 and self.kappa != 1 and np.isfinite(self.kappa)):
            raise ValueError(f"conductivity must be positive, finite and != 1 (got {self.kappa})")

    @property
    def contrast(self) -> float:
        """``lambda = (kappa + 1) / (2 kappa - 2)``."""
        return (self.kappa + 1) / (2 * self.kappa - 2)


@dataclass(frozen=True)
class MotionModel:
    """Brownian acceleration (``sigma_a``) and Brownian orientation (``sigma_theta``)
    sampled every ``dtau``."""

    sigma_a: float = 2.0
    sigma_theta: float = 0.5
    dtau: float = 0.01

    def __post_init__(self):
        # zero noise is allowed for deterministic runs
        if self.sigma_a < 0 or self.sigma_theta < 0 or self.dtau < 0:
            raise ValueError("motion model parameters must be non-negative")


class TargetState(NamedTuple):
    """State ``(vx, vy, x, y, theta)``; ``theta`` is unwrapped."""

    vx: float
    vy: float
    x: float
    y: float
    theta: float

    @classmethod
    def from_array(cls, a) -> "TargetState":
        a = np.asarray(a, dtype=float).ravel()
        if a.size != 5:
            raise ValueError(f"state vector must have 5 entries, got {a.size}")
        return cls(*map(float, a))

    def motion(self, delta=1.0) -> RigidMotion:
        """Rigid motion seen by the operator (translation in units of ``delta``)."""
        return RigidMotion(self.x / delta, self.y / delta, self.theta)


class NoiseSpec(NamedTuple):
    level: float = 0.0
    seed: int = 0


def disk_cgpt(radius, material: MaterialParams, K: int) -> np.ndarray:
    """CGPT of a centered disk: ``cc_mm = ss_mm = 2 pi m r^(2m) (kappa-1)/(kappa+1)``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    k = material.kappa
    M = np.zeros((2 * K, 2 * K))
    for m in range(1, K + 1):
        M[2 * m - 2, 2 * m - 2] = M[2 * m - 1, 2 * m - 1] = (
            2 * np.pi * m * radius ** (2 * m) * (k - 1) / (k + 1))
    return M


# Symmetric perturbation of the order <= 2 blocks of a unit disk.  It makes
# the target anisotropic and, through the order 1-2 coupling, removes the
# pi-periodicity of the order-one tensor so orientation is observable.
_PERTURBATION = np.array([
    [-1.496, -0.084, 2.032, 0.288],
    [-0.084, 0.584, 0.096, -2.256],
    [2.032, 0.096, 5.520, 1.264],
    [0.288, -2.256, 1.264, 1.776],
])


def asymmetric_target_cgpt(K: int, kappa: float = 3.0) -> np.ndarray:
    """Reference target: unit disk plus a fixed asymmetric perturbation.

    Stands in for shapes whose CGPTs require a boundary-integral solver.
    The result is symmetric and its orientation is observable.  With
    ``delta`` as the physical radius the target has diameter ``2 delta``.
    """
    M = disk_cgpt(1.0, MaterialParams(kappa), K)
    k = min(4, 2 * K)
    M[:k, :k] += _PERTURBATION[:k, :k]
    return M


def ellipse_like_cgpt(K: int, kappa: float = 3.0) -> np.ndarray:
    """Elongated reference CGPT used for reconstruction benchmarks.

    Order-one block is the polarization tensor of an ellipse with semi-axes
    1 and 0.5; higher orders are disk-like with a mild anisotropy.
    """
    a, b = 1.0, 0.5
    c = (kappa - 1) / (kappa + 1)
    area = np.pi * a * b
    # polarization tensor of the ellipse, principal axes along x and y
    M = np.zeros((2 * K, 2 * K))
    M[0, 0] = area * (kappa - 1) * (a + b) / (a + kappa * b)
    M[1, 1] = area * (kappa - 1) * (a + b) / (b + kappa * a)
    r = np.sqrt(a * b)
    for m in range(2, K + 1):
        base = 2 * np.pi * m * r ** (2 * m) * c
        M[2 * m - 2, 2 * m - 2] = base * 1.2
        M[2 * m - 1, 2 * m - 1] = base * 0.8
    return M


def process_covariance(model: MotionModel) -> np.ndarray:
    """Covariance of one step of increments in state order ``(v, z, theta)``."""
    dt, sa2 = model.dtau, model.sigma_a**2
    I2 = np.eye(2)
    S = np.zeros((5, 5))
    S[:2, :2] = sa2 * I2
    S[:2, 2:4] = S[2:4, :2] = sa2 / 2 * dt * I2
    S[2:4, 2:4] = sa2 / 3 * dt**2 * I2
    S[4, 4] = model.sigma_theta**2
    return dt * S


def transition_matrix(model: MotionModel) -> np.ndarray:
    F = np.eye(5)
    F[2, 0] = F[3, 1] = model.dtau
    return F


def covariance_factor(S) -> np.ndarray:
    """Lower factor ``L`` with ``L L^T = S`` for a PSD ``S`` (singular allowed)."""
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        w, Q = np.linalg.eigh(S)
        return Q * np.sqrt(np.clip(w, 0, None))


def simulate_trajectory(model: MotionModel, X0, steps: int, rng) -> list[TargetState]:
    """States ``X_1 .. X_steps`` of ``X_t = F X_{t-1} + U_t``, ``U_t ~ N(0, Sigma)``.

    ``rng`` is a seed (the ``"trajectory"`` sub-stream is used) or a
    :class:`numpy.random.Generator`.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not isinstance(rng, np.random.Generator):
        rng = make_rng(rng, "trajectory")
    F = transition_matrix(model)
    L = covariance_factor(process_covariance(model))
    U = rng.standard_normal((steps, 5)) @ L.T
    x = np.asarray(X0, dtype=float)
    out = []
    for u in U:
        x = F @ x + u
        out.append(TargetState.from_array(x))
    return out


def check_containment(state, geom: AcquisitionGeometry, frame=None):
    if not np.hypot(state[2], state[3]) + geom.delta < geom.radius:
        raise ContainmentViolation(
            f"target at ({state[2]:.6g}, {state[3]:.6g}) with scale {geom.delta} "
            f"is not inside the circle of radius {geom.radius}", frame)


def is_contained(states, geom: AcquisitionGeometry) -> bool:
    z = np.asarray(states, dtype=float).reshape(-1, 5)[:, 2:4]
    return bool(np.all(np.hypot(z[:, 0], z[:, 1]) + geom.delta < geom.radius))


def simulate_contained_trajectory(model: MotionModel, X0, steps: int, geom: AcquisitionGeometry,
                                  seed: int, max_attempts: int = 10_000):
    """Rejection-sample a trajectory that stays inside the measurement circle.

    Attempt ``a`` draws from ``make_rng(seed, "trajectory", a)``, so the
    accepted path is a deterministic function of ``seed``.  Returns
    ``(states, attempt)``.
    """
    if not is_contained(X0, geom):
        raise ContainmentViolation("initial state is outside the measurement circle")
    for attempt in range(max_attempts):
        states = simulate_trajectory(model, X0, steps, make_rng(seed, "trajectory", attempt))
        if is_contained(states, geom):
            return states, attempt
    raise ContainmentViolation(f"no contained trajectory in {max_attempts} attempts")


def msr_noise_std(V_clean, level) -> float:
    """Noise std for a relative level: ``level * ||V||_F / N`` (RMS entry scale)."""
    return float(level * np.linalg.norm(V_clean) / V_clean.shape[0])


def clean_msr(M_D, state, geom, K=None) -> np.ndarray:
    M_D = check_cgpt(M_D)
    if K is not None:
        M_D = M_D[:2 * K, :2 * K]
    return apply_forward(transform_cgpt(M_D, TargetState(*state).motion(geom.delta)), geom)


def generate_msr_stream(M_D, states: Sequence, geom: AcquisitionGeometry, K_data=None,
                        noise: NoiseSpec = NoiseSpec()) -> list[np.ndarray]:
    """MSR frames of the moving target plus white noise at a relative level.

    ``M_D`` is truncated to order ``K_data`` when that is smaller.  The
    noise draws come from the ``"measurement"`` sub-stream of ``noise.seed``.
    """
    if noise.level < 0:
        raise ValueError("noise level must be non-negative")
    K = order_of(M_D) if K_data is None else K_data
    if K > order_of(M_D):
        raise ValueError(f"target CGPT has order {order_of(M_D)} < K_data={K}")
    for t, X in enumerate(states):
        check_containment(X, geom, t)
    rng = make_rng(noise.seed, "measurement")
    frames = []
    for X in states:
        V = clean_msr(M_D, X, geom, K)
        W = rng.standard_normal(V.shape)
        frames.append(V + msr_noise_std(V, noise.level) * W)
    return frames


def save_cgpt_json(path, M):
    M = check_cgpt(M)
    Path(path).write_text(json.dumps({"K": order_of(M), "entries": M.tolist()}, indent=1) + "\n")


def load_cgpt_json(path) -> np.ndarray:
    data = json.loads(Path(path).read_text())
    try:
        K = int(data["K"])
        M = np.array(data["entries"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: expected {{K, entries}} CGPT object") from exc
    return check_cgpt(M, K)
