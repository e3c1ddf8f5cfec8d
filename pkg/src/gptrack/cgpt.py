"""Complex CGPTs and their transformation under rigid motions."""

from __future__ import annotations

from math import comb
from typing import NamedTuple

import numpy as np

from .acquisition import check_cgpt, order_of


class DegenerateRatios(ArithmeticError):
    """The first-order motion relations are not well defined for the input."""


class ComplexCgpt(NamedTuple):
    """Pair of ``K x K`` complex matrices ``(N1, N2)``."""

    N1: np.ndarray
    N2: np.ndarray

    @property
    def K(self) -> int:
        return self.N1.shape[0]


class RigidMotion(NamedTuple):
    """Rotation by ``theta`` about the origin, then translation by ``(x, y)``:
    the moved shape is ``z + R_theta D``."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)

    def then(self, other: "RigidMotion") -> "RigidMotion":
        """Motion equivalent to applying ``self`` and then ``other``."""
        z = other.z + self.z * np.exp(1j * other.theta)
        return RigidMotion(z.real, z.imag, self.theta + other.theta)


def _blocks(M):
    return M[0::2, 0::2], M[0::2, 1::2], M[1::2, 0::2], M[1::2, 1::2]


def to_complex(M) -> ComplexCgpt:
    """``N1 = U^T M U`` and ``N2 = U^H M U`` with ``U`` block-diagonal in ``(1, i)``."""
    M = check_cgpt(M)
    cc, cs, sc, ss = _blocks(M)
    return ComplexCgpt((cc - ss) + 1j * (cs + sc), (cc + ss) + 1j * (cs - sc))


def from_complex(NC: ComplexCgpt) -> np.ndarray:
    N1, N2 = (np.asarray(a, dtype=complex) for a in NC)
    K = N1.shape[0]
    M = np.empty((2 * K, 2 * K))
    M[0::2, 0::2] = (N1 + N2).real / 2
    M[0::2, 1::2] = (N1 + N2).imag / 2
    M[1::2, 0::2] = (N1 - N2).imag / 2
    M[1::2, 1::2] = (N2 - N1).real / 2
    return M


def motion_matrix(motion: RigidMotion, K: int) -> np.ndarray:
    """Upper-triangular ``F`` with ``F_mn = C(n, m) z^(n-m) e^(i m theta)``."""
    z = motion.z
    F = np.zeros((K, K), dtype=complex)
    for m in range(1, K + 1):
        rot = np.exp(1j * m * motion.theta)
        for n in range(m, K + 1):
            # z**0 == 1 also for z == 0
            F[m - 1, n - 1] = comb(n, m) * z ** (n - m) * rot
    return F


def _motion_matrix_dz(motion: RigidMotion, K: int) -> np.ndarray:
    """Derivative of ``F`` with respect to the complex translation ``z``."""
    z = motion.z
    dF = np.zeros((K, K), dtype=complex)
    for m in range(1, K + 1):
        rot = np.exp(1j * m * motion.theta)
        for n in range(m + 1, K + 1):
            dF[m - 1, n - 1] = comb(n, m) * (n - m) * z ** (n - m - 1) * rot
    return dF


def _real_embedding(F):
    """Real ``2K x 2K`` matrix ``G`` with columns ``(Re J_n, Im J_n)``, ``J = U F``.

    The transformed CGPT is then ``G^T M G``.
    """
    K = F.shape[0]
    G = np.zeros((2 * K, 2 * K))
    # rows 2m-2 / 2m-1 of J = U F are F_m and i F_m
    G[0::2, 0::2] = F.real
    G[0::2, 1::2] = F.imag
    G[1::2, 0::2] = -F.imag
    G[1::2, 1::2] = F.real
    return G


def transform_cgpt(M, motion: RigidMotion) -> np.ndarray:
    """CGPT of ``z + R_theta D`` given the CGPT ``M`` of ``D``."""
    M = check_cgpt(M)
    G = _real_embedding(motion_matrix(motion, order_of(M)))
    return G.T @ M @ G


def transform_partials(M, motion: RigidMotion):
    """Derivatives of :func:`transform_cgpt` in ``x``, ``y`` and ``theta``."""
    M = check_cgpt(M)
    K = order_of(M)
    F = motion_matrix(motion, K)
    G = _real_embedding(F)
    dz = _motion_matrix_dz(motion, K)
    # F is holomorphic in z, so d/dy = i d/dz
    dF = (dz, 1j * dz, 1j * np.arange(1, K + 1)[:, None] * F)
    out = []
    for d in dF:
        dG = _real_embedding(d)
        out.append(dG.T @ M @ G + G.T @ M @ dG)
    return tuple(out)


def _ratio(NC: ComplexCgpt):
    scale = max(np.abs(NC.N1).max(), np.abs(NC.N2).max())
    for name, N in zip(("N1", "N2"), NC):
        if not abs(N[0, 0]) > 1e-14 * scale:
            raise DegenerateRatios(f"{name}[1,1] vanishes")
    return NC.N1[0, 1] / NC.N1[0, 0], NC.N2[0, 1] / NC.N2[0, 0]


def first_order_estimate(prev: ComplexCgpt, cur: ComplexCgpt):
    """Increment ``(dx, dy, dtheta)`` of the motion taking ``prev`` to ``cur``.

    Solves the order-one/two relations
    ``N12/N11 (cur) = 2 dz + e^(i dtheta) N12/N11 (prev)`` for both complex
    CGPTs.  ``dtheta`` is the principal value in ``(-pi, pi]``.
    """
    if prev.K < 2 or cur.K < 2:
        raise DegenerateRatios("order >= 2 complex CGPTs are required")
    p1, p2 = _ratio(prev)
    c1, c2 = _ratio(cur)
    r_prev, r_cur = p1 - p2, c1 - c2
    scale = max(abs(p1), abs(p2), 1.0)
    if abs(r_prev) <= 1e-14 * scale or abs(r_cur) <= 1e-14 * scale:
        raise DegenerateRatios("ratio difference vanishes; rotation is not identifiable")
    dtheta = float(np.angle(r_cur / r_prev))
    dz = (c1 - np.exp(1j * dtheta) * p1) / 2
    return float(dz.real), float(dz.imag), dtheta
