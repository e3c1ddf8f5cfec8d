"""Recovery of CGPTs from MSR data.

Least squares, Tikhonov regularization, and the explicit left inverse of
the coefficient matrix built from trigonometric interpolation kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import mpmath
import numpy as np

from .acquisition import (
    AcquisitionGeometry,
    GeometryError,
    check_cgpt,
    check_msr,
    forward_factor,
    pinv_apply,
    scaling_diagonal,
    to_mp,
)


def default_mu_values():
    return np.logspace(-6, -1, 26)


@dataclass(frozen=True, eq=False)
class RegularizationGrid:
    """Candidate Tikhonov parameters, ascending."""

    mu_values: np.ndarray = field(default_factory=default_mu_values)

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu_values, dtype=float))
        if mu.size == 0 or np.any(mu <= 0):
            raise ValueError("regularization parameters must be positive")
        if np.any(np.diff(mu) <= 0):
            raise ValueError("regularization parameters must be strictly ascending")
        object.__setattr__(self, "mu_values", mu)

    def __iter__(self):
        return iter(self.mu_values)

    def __len__(self):
        return self.mu_values.size


def solve_least_squares(V, geom: AcquisitionGeometry, K: int) -> np.ndarray:
    """Minimal-norm minimizer of ``||L(M) - V||_F``."""
    return pinv_apply(V, geom, K)


class _TikhonovSolver:
    """SVD of ``A = C D`` reused across regularization parameters.

    The operator ``M -> A M A^T`` has singular values ``s_a s_b`` with
    singular vectors ``w_a w_b^T`` (right) and ``u_a u_b^T`` (left).
    """

    def __init__(self, geom, K):
        self.U, self.s, Wt = np.linalg.svd(forward_factor(geom, K), full_matrices=False)
        self.W = Wt.T
        self.sigma = np.outer(self.s, self.s)

    def coefficients(self, V):
        return self.U.T @ V @ self.U

    def solve(self, coef, mu):
        filt = self.sigma / (self.sigma**2 + mu)
        return self.W @ (coef * filt) @ self.W.T


def solve_tikhonov(V, geom: AcquisitionGeometry, K: int, mu: float) -> np.ndarray:
    """Unique minimizer of ``||L(M) - V||_F^2 + mu ||M||_F^2``."""
    if not mu > 0:
        raise ValueError(f"mu must be positive (got {mu})")
    V = check_msr(V, geom.n)
    solver = _TikhonovSolver(geom, K)
    return solver.solve(solver.coefficients(V), mu)


def leading_block_error(M_est, M_true, orders=2) -> float:
    """Relative Frobenius error over the CGPT blocks of order ``<= orders``."""
    k = 2 * orders
    ref = np.linalg.norm(M_true[:k, :k])
    return float(np.linalg.norm(M_est[:k, :k] - M_true[:k, :k]) / ref)


def select_mu(V, geom, K, M_true, grid: RegularizationGrid | None = None, orders=2):
    """Grid parameter whose Tikhonov solution best matches ``M_true``.

    Only meaningful in benchmarks where the true CGPT is known.  Returns
    ``(mu, error)`` with the error measured on the first ``orders`` orders.
    """
    grid = RegularizationGrid() if grid is None else grid
    M_true = check_cgpt(M_true, K)
    V = check_msr(V, geom.n)
    solver = _TikhonovSolver(geom, K)
    coef = solver.coefficients(V)
    errors = [leading_block_error(solver.solve(coef, mu), M_true, orders) for mu in grid]
    best = int(np.argmin(errors))
    return float(grid.mu_values[best]), float(errors[best])


def dirichlet_kernel(K, theta):
    """``sin((K + 1/2) t) / sin(t / 2)``, equal to ``2K + 1`` at multiples of ``2 pi``."""
    theta = np.asarray(theta, dtype=float)
    half = np.sin(theta / 2)
    at_zero = np.isclose(np.mod(theta + np.pi, 2 * np.pi) - np.pi, 0.0, atol=1e-12)
    safe = np.where(at_zero, 1.0, half)
    out = np.where(at_zero, 2 * K + 1.0, np.sin((K + 0.5) * theta) / safe)
    return out[()] if out.ndim == 0 else out


def _check_angles(angles):
    angles = np.asarray(angles, dtype=float).ravel()
    diffs = np.abs(np.sin((angles[:, None] - angles[None, :]) / 2))
    np.fill_diagonal(diffs, 1.0)
    if np.any(diffs < 1e-12):
        raise ValueError("interpolation nodes must be distinct modulo 2*pi")
    return angles


def _kernel_matrix(angles, theta):
    """``H[j, s] = h_s(theta_j)`` for all nodes ``s``.

    Products are accumulated as log-magnitudes and signs so that clustered
    nodes do not overflow.
    """
    n = angles.size
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    num = np.sin((theta[:, None] - angles[None, :]) / 2)          # (J, N)
    den = np.sin((angles[:, None] - angles[None, :]) / 2)         # (N, N)
    np.fill_diagonal(den, 1.0)
    log_den = np.log(np.abs(den)).sum(axis=1)
    sign_den = np.prod(np.sign(den), axis=1)

    H = np.empty((theta.size, n))
    for s in range(n):
        others = np.delete(num, s, axis=1)
        mag = np.abs(others)
        zero = np.any(mag == 0, axis=1)
        with np.errstate(divide="ignore"):
            logs = np.log(mag).sum(axis=1)
        val = np.prod(np.sign(others), axis=1) * sign_den[s] * np.exp(
            np.where(zero, 0.0, logs - log_den[s]))
        H[:, s] = np.where(zero, 0.0, val)
    if n % 2 == 0:
        H *= np.cos((theta[:, None] - angles[None, :]) / 2)
    return H


def interpolation_kernel(angles, s, theta):
    """Trigonometric Lagrange kernel ``h_s`` for nodes ``angles`` (``s`` is 0-based).

    For odd ``N`` this is the product of ``sin((t - t_j)/2) / sin((t_s - t_j)/2)``
    over ``j != s``; for even ``N`` it carries an extra ``cos((t - t_s)/2)``.
    """
    angles = _check_angles(angles)
    if not 0 <= s < angles.size:
        raise IndexError(f"node index {s} out of range")
    scalar = np.ndim(theta) == 0
    out = _kernel_matrix(angles, theta)[:, s]
    return float(out[0]) if scalar else out


def _fourier_rows(H, nodes, K, weight):
    k = np.arange(1, K + 1)
    phase = np.outer(k, nodes)
    Ct = np.empty((2 * K, H.shape[1]))
    Ct[0::2] = weight * np.cos(phase) @ H
    Ct[1::2] = weight * np.sin(phase) @ H
    return Ct


def _kernel_matrix_mp(angles, theta):
    """Object-array version of :func:`_kernel_matrix` at the current mpmath precision."""
    a = [mpmath.mpf(float(x)) for x in angles]
    n = len(a)
    den = [mpmath.fprod(mpmath.sin((a[s] - a[j]) / 2) for j in range(n) if j != s)
           for s in range(n)]
    H = np.empty((len(theta), n), dtype=object)
    for i, t in enumerate(theta):
        sines = [mpmath.sin((t - x) / 2) for x in a]
        for s in range(n):
            val = mpmath.fprod(sines[j] for j in range(n) if j != s) / den[s]
            if n % 2 == 0:
                val *= mpmath.cos((t - a[s]) / 2)
            H[i, s] = val
    return H


def _left_inverse_mp(angles, K, nodes, weight):
    H = _kernel_matrix_mp(angles, nodes)
    Ct = np.empty((2 * K, H.shape[1]), dtype=object)
    for k in range(1, K + 1):
        cos = np.array([mpmath.cos(k * t) for t in nodes], dtype=object)
        sin = np.array([mpmath.sin(k * t) for t in nodes], dtype=object)
        Ct[2 * k - 2] = weight * cos @ H
        Ct[2 * k - 1] = weight * sin @ H
    return Ct


def _check_left_inverse_order(n, K):
    if n <= 2 * K:
        raise GeometryError(f"left inverse needs N > 2K (got N={n}, K={K})")


def left_inverse(angles, K, dps: int | None = None) -> np.ndarray:
    """``2K x N`` matrix ``Ct`` with ``Ct @ C = I`` for the coefficient matrix ``C``.

    Rows are ``(1/pi) int h_s(t) cos(kt) dt`` and ``(1/pi) int h_s(t) sin(kt) dt``
    over one period, evaluated with a uniform rule that is exact for the
    trigonometric polynomial integrands.  The kernels grow quickly when the
    nodes cover only part of the circle; ``dps`` evaluates them in mpmath.
    """
    angles = _check_angles(angles)
    n = angles.size
    _check_left_inverse_order(n, K)
    q = 2 * (n + 2 * K) + 1
    if dps is not None:
        with mpmath.workdps(dps):
            nodes = [2 * mpmath.pi * j / q for j in range(q)]
            Ct = _left_inverse_mp(angles, K, nodes, mpmath.mpf(2) / q)
            return Ct.astype(float)
    nodes = 2 * np.pi * np.arange(q) / q
    return _fourier_rows(_kernel_matrix(angles, nodes), nodes, K, 2.0 / q)


def left_inverse_sum(angles, K) -> np.ndarray:
    """Same as :func:`left_inverse` for odd ``N``, using the ``N``-point sum
    at the equispaced nodes ``2 pi n / N``."""
    angles = _check_angles(angles)
    n = angles.size
    if n % 2 == 0:
        raise GeometryError("the N-point sum formula needs an odd number of nodes")
    _check_left_inverse_order(n, K)
    nodes = 2 * np.pi * np.arange(1, n + 1) / n
    return _fourier_rows(_kernel_matrix(angles, nodes), nodes, K, 2.0 / n)


def noiseless_inversion(V, geom: AcquisitionGeometry, K: int, dps: int | None = None) -> np.ndarray:
    """``D^-1 Ct V Ct^T D^-1``: exact inverse of the forward map on clean data.

    In float64 the rounding of ``V`` already acts as noise that ``Ct``
    amplifies, badly so for narrow apertures.  With ``dps`` the whole
    product runs in mpmath; ``V`` may then be an object array of ``mpf``
    (e.g. from ``apply_forward(..., dps=...)``).
    """
    if dps is None:
        V = check_msr(V, geom.n)
        B = left_inverse(geom.angles, K) / scaling_diagonal(geom.rho, K)[:, None]
        return B @ V @ B.T
    V = np.asarray(V)
    if V.shape != (geom.n, geom.n):
        raise ValueError(f"MSR matrix must be {geom.n} x {geom.n}, got {V.shape}")
    _check_left_inverse_order(geom.n, K)
    q = 2 * (geom.n + 2 * K) + 1
    with mpmath.workdps(dps):
        nodes = [2 * mpmath.pi * j / q for j in range(q)]
        Ct = _left_inverse_mp(geom.angles, K, nodes, mpmath.mpf(2) / q)
        rho = mpmath.mpf(geom.radius) / mpmath.mpf(geom.delta)
        inv_d = [2 * mpmath.pi * k * rho**k for k in range(1, K + 1) for _ in (0, 1)]
        B = Ct * np.array(inv_d, dtype=object)[:, None]
        Vo = V if V.dtype == object else to_mp(V)
        return (B @ Vo @ B.T).astype(float)


def is_pseudo_inverse(C, Ct, tol=1e-8) -> bool:
    """A left inverse is the pseudo-inverse iff ``C @ Ct`` is symmetric."""
    P = C @ Ct
    return bool(np.abs(P - P.T).max() <= tol * max(1.0, np.abs(P).max()))


def coefficient_matrix_from_angles(angles, K):
    """Coefficient matrix for bare node angles (no radius needed)."""
    angles = np.asarray(angles, dtype=float).ravel()
    phase = np.outer(angles, np.arange(1, K + 1))
    C = np.empty((angles.size, 2 * K))
    C[:, 0::2] = np.cos(phase)
    C[:, 1::2] = np.sin(phase)
    return C


__all__ = [
    "RegularizationGrid",
    "coefficient_matrix_from_angles",
    "dirichlet_kernel",
    "interpolation_kernel",
    "is_pseudo_inverse",
    "leading_block_error",
    "left_inverse",
    "left_inverse_sum",
    "noiseless_inversion",
    "select_mu",
    "solve_least_squares",
    "solve_tikhonov",
]
