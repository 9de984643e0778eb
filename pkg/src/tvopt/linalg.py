"""Dense linear algebra for small KKT-style systems.

Matrices are plain float64 numpy arrays in row-major order. Everything here
is a pure function of its inputs, so concurrent use is safe.

The module provides the four primitives the sensitivity machinery is built
on: a partitioned 2x2 block inverse, the right pseudoinverse of a fat
full-row-rank matrix, eigen/singular extremes, and the pair of oblique
projectors attached to a positive definite metric and a constraint Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Past this condition number the downstream sensitivity formulas are noise.
DEFAULT_CONDITION_CAP = 1e12
# Rank tolerance is relative to the largest singular value.
DEFAULT_RANK_RTOL = 1e-9


class LinalgError(Exception):
    """Base class for failures of the dense kernels."""


class SingularA(LinalgError):
    """Leading block (or metric) is singular beyond the condition cap."""


class SingularSchurComplement(LinalgError):
    """D - B A^{-1} C is not invertible, so the block inverse does not exist."""


class RankDeficient(LinalgError):
    """A matrix required to have full row rank does not."""


def _as_matrix(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


@dataclass(frozen=True)
class SpectralExtremes:
    """Extremes of the spectrum of a matrix.

    For symmetric input ``lambda_min``/``lambda_max`` are the extreme
    eigenvalues; ``sigma_min``/``sigma_max`` are the extreme singular values
    and are filled for any input. ``sigma_max`` equals the operator 2-norm.
    """

    sigma_min: float
    sigma_max: float
    lambda_min: float | None = None
    lambda_max: float | None = None
    symmetric: bool = False


def is_symmetric(M, rtol=1e-12):
    M = np.asarray(M, dtype=float)
    if M.shape[0] != M.shape[1]:
        return False
    scale = max(1.0, float(np.abs(M).max()))
    return float(np.abs(M - M.T).max()) <= rtol * scale


def spectral_extremes(M) -> SpectralExtremes:
    """Eigenvalue extremes for symmetric input, singular extremes otherwise."""
    M = _as_matrix(M, "M")
    if M.size == 0:
        return SpectralExtremes(sigma_min=0.0, sigma_max=0.0)
    if is_symmetric(M):
        w = np.linalg.eigvalsh(M)
        sing = np.abs(w)
        return SpectralExtremes(
            sigma_min=float(sing.min()),
            sigma_max=float(sing.max()),
            lambda_min=float(w[0]),
            lambda_max=float(w[-1]),
            symmetric=True,
        )
    s = np.linalg.svd(M, compute_uv=False)
    return SpectralExtremes(sigma_min=float(s[-1]), sigma_max=float(s[0]))


def condition_number(M) -> float:
    """2-norm condition estimate. Returns inf for a singular matrix."""
    s = np.linalg.svd(_as_matrix(M, "M"), compute_uv=False)
    if s[-1] == 0.0:
        return np.inf
    return float(s[0] / s[-1])


def block_inverse(A, B, C, D, condition_cap=DEFAULT_CONDITION_CAP):
    """Invert M = [[A, C], [B, D]] blockwise through the Schur complement.

    Returns the four blocks (M1, M2, M3, M4) of M^{-1}:

        M1 = A^{-1} + A^{-1} C S^{-1} B A^{-1}
        M2 = -A^{-1} C S^{-1}
        M3 = -S^{-1} B A^{-1}
        M4 = S^{-1},            with  S = D - B A^{-1} C.

    Raises SingularA when A fails the condition cap and
    SingularSchurComplement when S is not invertible. One Newton
    refinement pass on the assembled inverse keeps the multiply-back
    residual near machine precision even close to the condition cap.
    """
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    C = _as_matrix(C, "C")
    D = _as_matrix(D, "D")
    n = A.shape[0]
    m = D.shape[0]
    if A.shape != (n, n) or D.shape != (m, m) or B.shape != (m, n) or C.shape != (n, m):
        raise ValueError("inconsistent block shapes")

    if condition_number(A) > condition_cap:
        raise SingularA(f"leading block exceeds condition cap {condition_cap:g}")
    Ainv = np.linalg.inv(A)

    if m == 0:
        return Ainv, np.zeros((n, 0)), np.zeros((0, n)), np.zeros((0, 0))

    S = D - B @ Ainv @ C
    if condition_number(S) > condition_cap:
        raise SingularSchurComplement("Schur complement is not invertible")
    Sinv = np.linalg.inv(S)

    M1 = Ainv + Ainv @ C @ Sinv @ B @ Ainv
    M2 = -Ainv @ C @ Sinv
    M3 = -Sinv @ B @ Ainv
    M4 = Sinv

    M = np.block([[A, C], [B, D]])
    Minv = np.block([[M1, M2], [M3, M4]])
    for _ in range(2):
        R = np.eye(n + m) - M @ Minv
        if np.abs(R).max() <= 1e-14:
            break
        Minv = Minv + Minv @ R
    return Minv[:n, :n], Minv[:n, n:], Minv[n:, :n], Minv[n:, n:]


def right_pseudoinverse(B, rank_rtol=DEFAULT_RANK_RTOL):
    """Right pseudoinverse B^+ = B^T (B B^T)^{-1} of a k x n full-row-rank B.

    Satisfies B B^+ = I_k and sigma_max(B^+) = 1 / sigma_min(B^T).
    An empty B (k = 0) maps to an empty n x 0 result.
    """
    B = _as_matrix(B, "B")
    k, n = B.shape
    if k == 0:
        return np.zeros((n, 0))
    if k > n:
        raise RankDeficient(f"B has more rows ({k}) than columns ({n})")
    s = np.linalg.svd(B, compute_uv=False)
    if s[-1] <= rank_rtol * s[0] or s[-1] == 0.0:
        raise RankDeficient(f"sigma_min(B^T) = {s[-1]:.3e} below rank tolerance")
    return B.T @ np.linalg.inv(B @ B.T)


def oblique_projectors(A, B, rank_rtol=DEFAULT_RANK_RTOL, condition_cap=DEFAULT_CONDITION_CAP):
    """Projectors Sigma = A^{-1} B^T (B A^{-1} B^T)^{-1} B and Pi = I - Sigma.

    A must be symmetric positive definite and B full row rank. Pi projects
    onto ker B obliquely in the metric of A; Sigma onto a complement of it.
    Both are idempotent, B Pi = 0, and each norm is bounded by
    sqrt(lambda_max(A) / lambda_min(A)).

    An empty B follows the convention Sigma = 0, Pi = I.
    """
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[1] != n:
        raise ValueError("A must be n x n and B must be k x n")
    w = np.linalg.eigvalsh(0.5 * (A + A.T))
    if w[0] <= 0.0 or w[-1] / w[0] > condition_cap:
        raise SingularA("metric A is not safely positive definite")
    k = B.shape[0]
    if k == 0:
        return np.zeros((n, n)), np.eye(n)
    s = np.linalg.svd(B, compute_uv=False)
    if k > n or s[-1] <= rank_rtol * s[0]:
        raise RankDeficient("B does not have full row rank")

    AinvBt = np.linalg.solve(A, B.T)
    Sigma = AinvBt @ np.linalg.solve(B @ AinvBt, B)
    Pi = np.eye(n) - Sigma
    return Sigma, Pi
