"""Small dense linear algebra: Gram matrices, Cholesky tests, Sturm bisection.

Everything here works on float64 numpy arrays of modest size (n <= ~12).
The tridiagonal routines assume a unit diagonal, which is always the case for
Gram matrices of unit generators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AsymmetricMatrix, DimensionMismatch

#: Global zero tolerance for sign decisions.
EPS0 = 1e-10


def as_matrix(M) -> np.ndarray:
    A = np.array(M, dtype=float)
    if A.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def _check_square(A: np.ndarray) -> None:
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")


def _check_symmetric(A: np.ndarray, tol: float = 1e-9) -> None:
    _check_square(A)
    if A.size and np.max(np.abs(A - A.T)) > tol:
        raise AsymmetricMatrix("matrix is not symmetric within 1e-9")


def gram(V) -> np.ndarray:
    """Return ``V.T @ V`` symmetrized, for V with n rows and k <= n columns."""
    V = as_matrix(V)
    if V.shape[1] > V.shape[0]:
        raise DimensionMismatch(
            f"gram expects at most as many columns as rows, got {V.shape}"
        )
    G = V.T @ V
    return 0.5 * (G + G.T)


def determinant(M) -> float:
    """Determinant via LU with partial pivoting (LAPACK getrf)."""
    A = as_matrix(M)
    _check_square(A)
    if A.shape[0] == 0:
        return 1.0
    return float(np.linalg.det(A))


def is_positive_definite(M, tol: float = EPS0) -> bool:
    """True iff the Cholesky factorization of M succeeds with every pivot > tol."""
    A = as_matrix(M)
    _check_symmetric(A)
    n = A.shape[0]
    L = np.zeros_like(A)
    for j in range(n):
        pivot = A[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > tol:
            return False
        L[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            L[j + 1:, j] = (A[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return True


@dataclass(frozen=True)
class SymTridiag:
    """Symmetric tridiagonal matrix with (nominally unit) diagonal."""

    diag: tuple
    offdiag: tuple

    def __post_init__(self):
        if len(self.offdiag) != max(len(self.diag) - 1, 0):
            raise DimensionMismatch("offdiag must have len(diag) - 1 entries")
        if not all(np.isfinite(self.diag)) or not all(np.isfinite(self.offdiag)):
            raise ValueError("non-finite entries")

    @classmethod
    def unit(cls, beta) -> "SymTridiag":
        beta = tuple(float(b) for b in beta)
        return cls(diag=(1.0,) * (len(beta) + 1), offdiag=beta)

    @property
    def n(self) -> int:
        return len(self.diag)

    def dense(self) -> np.ndarray:
        T = np.diag(np.array(self.diag, dtype=float))
        for i, b in enumerate(self.offdiag):
            T[i, i + 1] = T[i + 1, i] = b
        return T


def sturm_sequence(T: SymTridiag, lam: float) -> np.ndarray:
    """Values P_0(lam), ..., P_n(lam) of the leading-minor characteristic polynomials.

    P_j = (d_j - lam) P_{j-1} - b_{j-1}^2 P_{j-2}.  Can overflow for large n;
    use :func:`sturm_count` for eigenvalue counting.
    """
    P = np.empty(T.n + 1)
    P[0] = 1.0
    if T.n == 0:
        return P
    P[1] = T.diag[0] - lam
    for j in range(2, T.n + 1):
        P[j] = (T.diag[j - 1] - lam) * P[j - 1] - T.offdiag[j - 2] ** 2 * P[j - 2]
    return P


def sturm_count(T: SymTridiag, lam: float) -> int:
    """Number of eigenvalues of T strictly less than ``lam``.

    Uses the ratio form q_j = P_j / P_{j-1} of the Sturm recurrence; the count
    of negative ratios equals the number of sign changes in P_0..P_n.
    """
    count = 0
    q = 1.0
    tiny = np.finfo(float).tiny ** 0.5
    for j in range(T.n):
        off2 = T.offdiag[j - 1] ** 2 if j > 0 else 0.0
        q = (T.diag[j] - lam) - off2 / q
        if abs(q) < tiny:
            q = -tiny
        if q < 0.0:
            count += 1
    return count


def tridiag_lambda_min(T: SymTridiag, tol: float = 1e-12) -> float:
    """Smallest eigenvalue of a unit-diagonal tridiagonal matrix by Sturm bisection.

    The bracket is [0, 2]; it is widened to the Gershgorin interval only when the
    matrix is not positive semidefinite.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if T.n == 0:
        raise DimensionMismatch("empty matrix")
    lo, hi = 0.0, 2.0
    if sturm_count(T, lo) > 0:
        radius = np.zeros(T.n)
        off = np.abs(np.array(T.offdiag, dtype=float))
        radius[:-1] += off
        radius[1:] += off
        lo = float(np.min(np.array(T.diag) - radius)) - 1.0
    while sturm_count(T, hi) < 1:
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if sturm_count(T, mid) >= 1:
            hi = mid
        else:
            lo = mid
    lam = 0.5 * (lo + hi)
    if any(b != 0.0 for b in T.offdiag) and sturm_count(T, 0.0) == 0:
        # 0 < lambda_min < 1 whenever some coupling is nonzero and T is PD
        assert 0.0 < lam < 1.0, lam
    return lam


def smallest_eigenvalue_dense(M, tol: float = 1e-12) -> float:
    """Smallest eigenvalue of a dense symmetric matrix (LAPACK ``syevd``).

    ``tol`` is accepted for interface symmetry; the LAPACK result is accurate
    to machine precision relative to the matrix norm.
    """
    A = as_matrix(M)
    _check_symmetric(A)
    if A.shape[0] == 0:
        raise DimensionMismatch("empty matrix")
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])


def is_tridiagonal(G, tol: float = 1e-9) -> bool:
    """True iff every entry with |i - j| >= 2 is below ``tol`` in magnitude."""
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    if n < 3:
        return True
    mask = np.abs(np.subtract.outer(np.arange(n), np.arange(n))) >= 2
    return bool(np.max(np.abs(G[mask])) <= tol)


def orthonormal_basis(vectors, tol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis (as columns) of the span of the given row vectors."""
    A = np.atleast_2d(np.asarray(vectors, dtype=float))
    if A.size == 0:
        return np.zeros((A.shape[1] if A.ndim == 2 else 0, 0))
    U, s, _ = np.linalg.svd(A.T, full_matrices=False)
    scale = s[0] if s.size and s[0] > 0 else 1.0
    rank = int(np.sum(s > tol * max(scale, 1.0)))
    return U[:, :rank]


def null_space_vector(A, tol: float = 1e-12) -> np.ndarray:
    """A unit vector orthogonal to every row of A (A has n-1 independent rows)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    _, _, Vt = np.linalg.svd(A, full_matrices=True)
    return Vt[-1]
