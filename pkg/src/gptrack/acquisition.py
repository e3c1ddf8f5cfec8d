"""Circular acquisition geometry and the linear MSR/CGPT operator.

A CGPT matrix is a real ``2K x 2K`` array whose ``(m, n)`` block (1-based
orders) sits at rows ``2m-2 : 2m`` and columns ``2n-2 : 2n`` and holds
``[[cc, cs], [sc, ss]]``.  An MSR matrix is a real ``N x N`` array with
entry ``(s, r)`` the response at receiver ``r`` to source ``s``.  When an
MSR matrix has to be flattened, rows are concatenated (C order).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import mpmath
import numpy as np

TWO_PI = 2.0 * np.pi


class GeometryError(ValueError):
    """Raised when an acquisition geometry or order is invalid."""


class DegenerateGeometryWarning(RuntimeWarning):
    """Issued when the coefficient matrix is numerically rank deficient."""


@dataclass(frozen=True, eq=False)
class AcquisitionGeometry:
    """Coincident sources/receivers on a circle of radius ``radius``.

    Use :meth:`uniform` or :meth:`grouped` rather than the raw constructor.
    ``delta`` is the characteristic size of the target; all CGPTs handled
    with this geometry are those of the unit-size reference shape, so the
    operator only sees ``rho = radius / delta``.
    """

    angles: np.ndarray
    radius: float
    delta: float = 1.0
    gamma: float | None = None
    groups: tuple[tuple[float, float, int], ...] | None = field(default=None)

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=float).ravel()
        if angles.size < 1:
            raise GeometryError("at least one receiver is required")
        if not np.all(np.isfinite(angles)):
            raise GeometryError("receiver angles must be finite")
        if np.any(np.diff(angles) <= 0):
            raise GeometryError("receiver angles must be distinct and strictly increasing")
        if angles[0] <= 0 or angles[-1] > TWO_PI + 1e-12:
            raise GeometryError("receiver angles must lie in (0, 2*pi]")
        if not (self.radius > 0 and self.delta > 0):
            raise GeometryError("radius and delta must be positive")
        if self.radius <= self.delta:
            raise GeometryError(
                f"rho = R/delta must exceed 1 (got R={self.radius}, delta={self.delta})")
        angles.setflags(write=False)
        object.__setattr__(self, "angles", angles)

    @classmethod
    def uniform(cls, n, radius, delta=1.0, gamma=TWO_PI):
        """``n`` receivers at angles ``gamma * s / n`` for ``s = 1..n``."""
        if n < 1:
            raise GeometryError("n must be positive")
        if not 0 < gamma <= TWO_PI:
            raise GeometryError("gamma must lie in (0, 2*pi]")
        angles = gamma * np.arange(1, n + 1) / n
        return cls(angles=angles, radius=float(radius), delta=float(delta), gamma=float(gamma))

    @classmethod
    def grouped(cls, groups: Sequence[tuple[float, float, int]], radius, delta=1.0):
        """Union of uniform arcs; each group is ``(start, span, count)``.

        Group angles are ``start + span * j / count`` for ``j = 1..count``,
        wrapped into ``(0, 2*pi]``.
        """
        parts = []
        for start, span, count in groups:
            if count < 1 or span <= 0:
                raise GeometryError(f"invalid group {(start, span, count)}")
            parts.append(start + span * np.arange(1, count + 1) / count)
        angles = np.concatenate(parts)
        angles = np.mod(angles, TWO_PI)
        angles[angles <= 1e-14] = TWO_PI
        angles = np.sort(angles)
        if np.any(np.diff(angles) <= 1e-12):
            raise GeometryError("grouped layout produces coincident receivers")
        groups = tuple((float(a), float(b), int(c)) for a, b, c in groups)
        return cls(angles=angles, radius=float(radius), delta=float(delta), groups=groups)

    @property
    def n(self) -> int:
        return self.angles.size

    @property
    def rho(self) -> float:
        return self.radius / self.delta

    @property
    def is_full_view(self) -> bool:
        return self.gamma is not None and math.isclose(self.gamma, TWO_PI, rel_tol=0, abs_tol=1e-12)

    def __repr__(self):
        layout = f"gamma={self.gamma!r}" if self.groups is None else f"groups={self.groups!r}"
        return (f"AcquisitionGeometry(n={self.n}, radius={self.radius!r}, "
                f"delta={self.delta!r}, {layout})")


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    """Singular values of the MSR operator and its conditioning.

    ``log10_condition`` is computed from logarithms, so it stays finite
    when the ratio itself would not fit in a float.
    """

    singular_values: np.ndarray
    condition_number: float
    log10_condition: float
    gram_eigenvalues: np.ndarray | None = None
    numerically_singular: bool = False
    log10_condition_bound: float | None = None

    @property
    def satisfies_bound(self) -> bool | None:
        if self.log10_condition_bound is None:
            return None
        return self.log10_condition <= self.log10_condition_bound + 1e-9


def _check_order(n, K):
    if K < 1:
        raise GeometryError(f"order K must be >= 1 (got {K})")
    if n < 2 * K:
        raise GeometryError(f"need N >= 2K for order K={K} (got N={n})")


def check_cgpt(M, K=None) -> np.ndarray:
    """Validate a CGPT matrix and return it as a float array."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2:
        raise ValueError(f"CGPT matrix must be 2K x 2K, got shape {M.shape}")
    if K is not None and M.shape[0] != 2 * K:
        raise ValueError(f"CGPT matrix has order {M.shape[0] // 2}, expected {K}")
    if not np.all(np.isfinite(M)):
        raise ValueError("CGPT matrix has non-finite entries")
    return M


def check_msr(V, n=None) -> np.ndarray:
    """Validate an MSR matrix and return it as a float array."""
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise ValueError(f"MSR matrix must be square, got shape {V.shape}")
    if n is not None and V.shape[0] != n:
        raise ValueError(f"MSR matrix has {V.shape[0]} receivers, geometry has {n}")
    if not np.all(np.isfinite(V)):
        raise ValueError("MSR matrix has non-finite entries")
    return V


def order_of(M) -> int:
    return np.shape(M)[0] // 2


def coefficient_matrix(geom: AcquisitionGeometry, K: int) -> np.ndarray:
    """The ``N x 2K`` matrix with row ``r`` equal to ``(cos m t_r, sin m t_r)_m``."""
    _check_order(geom.n, K)
    k = np.arange(1, K + 1)
    phase = np.outer(geom.angles, k)
    C = np.empty((geom.n, 2 * K))
    C[:, 0::2] = np.cos(phase)
    C[:, 1::2] = np.sin(phase)
    return C


def scaling_diagonal(rho, K) -> np.ndarray:
    """Diagonal of :func:`scaling_matrix` as a vector."""
    if not rho > 1:
        raise GeometryError(f"rho must exceed 1 (got {rho})")
    if K < 1:
        raise GeometryError(f"order K must be >= 1 (got {K})")
    k = np.arange(1, K + 1)
    d = 1.0 / (2 * np.pi * k * np.power(float(rho), k))
    return np.repeat(d, 2)


def scaling_matrix(rho, K) -> np.ndarray:
    return np.diag(scaling_diagonal(rho, K))


def forward_factor(geom, K) -> np.ndarray:
    """``A = C D``, so that the forward operator is ``M -> A M A^T``."""
    return coefficient_matrix(geom, K) * scaling_diagonal(geom.rho, K)


def apply_forward(M, geom: AcquisitionGeometry, K: int | None = None, dps: int | None = None):
    """Noise-free MSR matrix ``C D M D C^T`` of the CGPT ``M``.

    With ``dps`` the product is evaluated in mpmath at ``dps`` digits and an
    object array of ``mpf`` is returned (entries of ``M`` and the receiver
    angles are taken as exact binary values).
    """
    M = check_cgpt(M, K)
    if dps is None:
        A = forward_factor(geom, order_of(M))
        return A @ M @ A.T
    with mpmath.workdps(dps):
        A = forward_factor_mp(geom, order_of(M))
        Mo = to_mp(M)
        return A @ Mo @ A.T


to_mp = np.vectorize(lambda x: mpmath.mpf(x), otypes=[object])


def forward_factor_mp(geom, K) -> np.ndarray:
    """Object-array version of :func:`forward_factor` at the current mpmath precision."""
    _check_order(geom.n, K)
    rho = mpmath.mpf(geom.radius) / mpmath.mpf(geom.delta)
    A = np.empty((geom.n, 2 * K), dtype=object)
    for r, t in enumerate(geom.angles):
        t = mpmath.mpf(float(t))
        for k in range(1, K + 1):
            d = 1 / (2 * mpmath.pi * k * rho**k)
            A[r, 2 * k - 2] = mpmath.cos(k * t) * d
            A[r, 2 * k - 1] = mpmath.sin(k * t) * d
    return A


def operator_matrix(geom, K) -> np.ndarray:
    """Dense ``N^2 x 4K^2`` matrix of the forward operator on row-major vectors."""
    A = forward_factor(geom, K)
    return np.kron(A, A)


def _pinv_factor(A, *, warn=True):
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    tol = s[0] * max(A.shape) * np.finfo(float).eps
    keep = s > tol
    if warn and not np.all(keep):
        warnings.warn(
            f"coefficient matrix is numerically rank deficient "
            f"(rank {keep.sum()} < {A.shape[1]}); truncating",
            DegenerateGeometryWarning, stacklevel=3)
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def pinv_apply(V, geom: AcquisitionGeometry, K: int) -> np.ndarray:
    """Minimal-norm least-squares CGPT ``A^+ V (A^+)^T`` with ``A = C D``.

    Singular values of ``A`` below ``max(s) * max(N, 2K) * eps`` are
    dropped, with a :class:`DegenerateGeometryWarning`.
    """
    V = check_msr(V, geom.n)
    Ap = _pinv_factor(forward_factor(geom, K))
    return Ap @ V @ Ap.T


def fullview_pinv(V, geom: AcquisitionGeometry, K: int) -> np.ndarray:
    """Closed-form pseudo-inverse ``(4/N^2) D^-1 C^T V C D^-1`` (full view only)."""
    if not geom.is_full_view:
        raise GeometryError("fullview_pinv requires a uniform layout with gamma = 2*pi")
    V = check_msr(V, geom.n)
    C = coefficient_matrix(geom, K)
    B = C / scaling_diagonal(geom.rho, K)
    return (4.0 / geom.n**2) * (B.T @ V @ B)


def _pow10(x) -> float:
    return math.inf if x > 308 else float(10.0**x)


def fullview_singular_values(n, rho, K) -> SpectrumReport:
    """Closed-form singular values of the full-view operator.

    ``lambda_ab = n / (8 pi^2 ceil(a/2) ceil(b/2) rho^(ceil(a/2)+ceil(b/2)))``
    with the canonical basis matrices as right singular vectors.
    """
    _check_order(n, K)
    if not rho > 1:
        raise GeometryError(f"rho must exceed 1 (got {rho})")
    k = np.repeat(np.arange(1, K + 1), 2)
    log_d = -np.log(k) - k * np.log(rho)
    log_sv = np.log(n / (8 * np.pi**2)) + log_d[:, None] + log_d[None, :]
    sv = np.sort(np.exp(log_sv).ravel())[::-1]
    log10_cond = (2 * np.log(K) + 2 * (K - 1) * np.log(rho)) / np.log(10)
    return SpectrumReport(
        singular_values=sv,
        condition_number=_pow10(log10_cond),
        log10_condition=float(log10_cond),
        gram_eigenvalues=np.sort(n / 2 * np.exp(2 * log_d))[::-1],
    )


def _gram_eigenvalues_mp(angles, K, rho, dps):
    """Eigenvalues of ``C^T C`` and ``D C^T C D`` at ``dps`` decimal digits."""
    with mpmath.workdps(dps):
        # angles are exact binary floats; reproduce them at full precision
        theta = [mpmath.mpf(float(t)) for t in angles]
        rho = mpmath.mpf(float(rho))
        rows = []
        for k in range(1, K + 1):
            rows.append([mpmath.cos(k * t) for t in theta])
            rows.append([mpmath.sin(k * t) for t in theta])
        d = [1 / (2 * mpmath.pi * k * rho**k) for k in range(1, K + 1) for _ in (0, 1)]
        n2 = 2 * K
        G = mpmath.matrix(n2, n2)
        for i in range(n2):
            for j in range(i, n2):
                G[i, j] = G[j, i] = mpmath.fsum(a * b for a, b in zip(rows[i], rows[j]))
        GD = mpmath.matrix(n2, n2)
        for i in range(n2):
            for j in range(n2):
                GD[i, j] = d[i] * G[i, j] * d[j]
        ctc = sorted(mpmath.eigsy(G, eigvals_only=True), reverse=True)
        dctcd = sorted(mpmath.eigsy(GD, eigvals_only=True), reverse=True)
        return ctc, dctcd


def _log10_cond(eigs, tol):
    """log10 of max/min over eigenvalues, ``inf`` when some fall under ``tol``."""
    top = eigs[0]
    if eigs[-1] <= tol * top:
        return math.inf, True
    return float(mpmath.log10(top) - mpmath.log10(eigs[-1])), False


def gram_spectra(geom: AcquisitionGeometry, K: int, dps: int | None = None):
    """Descending eigenvalues of ``C^T C`` and ``D C^T C D``.

    Returns ``(ctc, dctcd, tol)`` where ``tol`` is the relative level under
    which eigenvalues are not resolved at the working precision.  With
    ``dps=None`` the computation is in float64 (via SVD, so eigenvalues are
    squared singular values); otherwise mpmath is used at ``dps`` digits.
    """
    _check_order(geom.n, K)
    if dps is None:
        C = coefficient_matrix(geom, K)
        sc = np.linalg.svd(C, compute_uv=False)
        sa = np.linalg.svd(C * scaling_diagonal(geom.rho, K), compute_uv=False)
        # singular values are resolved down to tol * s_max, their squares to tol**2
        tol = (max(geom.n, 2 * K) * np.finfo(float).eps) ** 2
        ctc = [mpmath.mpf(float(x)) ** 2 for x in sc]
        dctcd = [mpmath.mpf(float(x)) ** 2 for x in sa]
        return ctc, dctcd, tol
    ctc, dctcd = _gram_eigenvalues_mp(geom.angles, K, geom.rho, dps)
    tol = max(geom.n, 2 * K) * mpmath.mpf(10) ** (-dps)
    return ctc, dctcd, tol


def limitedview_spectrum(geom: AcquisitionGeometry, K: int, dps: int | None = None) -> SpectrumReport:
    """Spectrum of the MSR operator for an arbitrary receiver layout.

    With ``mu`` the eigenvalues of ``D C^T C D``, the singular values of the
    operator are ``sqrt(mu_a mu_b)`` and its condition number is
    ``cond(D C^T C D)``.  Eigenvalues that are not resolved at the working
    precision are reported as 0 and set ``numerically_singular``; pass
    ``dps`` (decimal digits) to resolve them with extended precision.
    """
    ctc, dctcd, tol = gram_spectra(geom, K, dps)
    log10_cond, singular = _log10_cond(dctcd, tol)
    log10_cond_c2, singular_c = _log10_cond(ctc, tol)

    mu = np.array([float(x) if x > tol * dctcd[0] else 0.0 for x in dctcd])
    sv = np.sort(np.sqrt(np.outer(mu, mu)).ravel())[::-1]
    bound = None
    if not singular_c:
        bound = log10_cond_c2 + (2 * math.log(K) + 2 * (K - 1) * math.log(geom.rho)) / math.log(10)
    return SpectrumReport(
        singular_values=sv,
        condition_number=_pow10(log10_cond),
        log10_condition=log10_cond,
        gram_eigenvalues=mu,
        numerically_singular=singular,
        log10_condition_bound=bound,
    )


def ctc_eigenvalues(geom, K, dps=None) -> np.ndarray:
    """Descending eigenvalues of ``C^T C``; unresolved ones are 0."""
    ctc, _, tol = gram_spectra(geom, K, dps)
    return np.array([float(x) if x > tol * ctc[0] else 0.0 for x in ctc])
