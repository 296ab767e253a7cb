"""Small dense symmetric-matrix routines built on a cyclic Jacobi eigensolver."""

from __future__ import annotations

import math

import numpy as np


class NotPositiveDefinite(ArithmeticError):
    pass


class NotSymmetric(ValueError):
    pass


def _as_matrix(A) -> np.ndarray:
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def _maxabs(A) -> float:
    return float(np.max(np.abs(A))) if A.size else 0.0


def check_symmetric(A, rtol: float = 1e-12) -> np.ndarray:
    A = _as_matrix(A)
    if np.max(np.abs(A - A.T), initial=0.0) > rtol * max(_maxabs(A), 1e-300):
        raise NotSymmetric("matrix is not symmetric")
    return A


def jacobi_eigen(A, tol: float = 1e-14, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition ``A = Q diag(lam) Q^T`` of a symmetric matrix.

    Cyclic Jacobi: sweep over all (p, q) pairs, annihilating each off-diagonal
    entry with a plane rotation, until the off-diagonal Frobenius norm drops
    below ``tol * maxabs(A)``. Eigenvalues are returned in descending order.
    """
    A = check_symmetric(A)
    n = len(A)
    a = 0.5 * (A + A.T)
    Q = np.eye(n)
    scale = _maxabs(A)
    if scale == 0.0:
        return Q, np.zeros(n)
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(np.triu(a, 1) ** 2)))
        if off < tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                G = np.eye(n)
                G[p, p] = G[q, q] = c
                G[p, q] = s
                G[q, p] = -s
                a = G.T @ a @ G
                a[p, q] = a[q, p] = 0.0
                Q = Q @ G
    else:
        raise ArithmeticError("Jacobi iteration did not converge")
    lam = np.diag(a).copy()
    order = np.argsort(-lam, kind="stable")
    return Q[:, order], lam[order]


def _pd_eigen(A) -> tuple[np.ndarray, np.ndarray]:
    Q, lam = jacobi_eigen(A)
    if lam.size and lam.min() <= 0.0:
        raise NotPositiveDefinite(f"matrix is not positive definite (min eigenvalue {lam.min():.3g})")
    return Q, lam


def sqrt_pd(A) -> np.ndarray:
    Q, lam = _pd_eigen(A)
    return (Q * np.sqrt(lam)) @ Q.T


def inverse_pd(A) -> np.ndarray:
    Q, lam = _pd_eigen(A)
    return (Q / lam) @ Q.T


def inv_sqrt_pd(A) -> np.ndarray:
    Q, lam = _pd_eigen(A)
    return (Q / np.sqrt(lam)) @ Q.T


def sqrt_similarity(C, Sigma) -> np.ndarray:
    """The principal square root of ``C Sigma^-1`` (positive spectrum).

    Computed as ``Sigma^{1/2} sqrt(Sigma^{-1/2} C Sigma^{-1/2}) Sigma^{-1/2}``,
    which is similar to a symmetric PD matrix.
    """
    C = check_symmetric(C)
    Sigma = check_symmetric(Sigma)
    _pd_eigen(C)
    Q, lam = _pd_eigen(Sigma)
    s_half = (Q * np.sqrt(lam)) @ Q.T
    s_mhalf = (Q / np.sqrt(lam)) @ Q.T
    inner = s_mhalf @ C @ s_mhalf
    R = s_half @ sqrt_pd(0.5 * (inner + inner.T)) @ s_mhalf
    target = C @ inverse_pd(Sigma)
    if _maxabs(R @ R - target) > 1e-8 * max(_maxabs(target), 1e-300):
        raise ArithmeticError("sqrt_similarity failed its residual check")
    return R


def operator_norm(A) -> float:
    """Largest singular value, ``sqrt(max eig(A^T A))``."""
    A = _as_matrix(A)
    M = A.T @ A
    _, lam = jacobi_eigen(0.5 * (M + M.T))
    return math.sqrt(max(float(lam[0]), 0.0))


def frobenius_norm(A) -> float:
    A = _as_matrix(A)
    return math.sqrt(float(np.sum(A * A)))


def trace(A) -> float:
    return float(np.trace(_as_matrix(A)))


def condition_number(A) -> float:
    _, lam = jacobi_eigen(A)
    if lam[-1] <= 0:
        return math.inf
    return float(lam[0] / lam[-1])
