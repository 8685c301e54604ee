"""Dense linear algebra used throughout the package.

Everything here works on float64 numpy arrays.  The routines are written
out (Jacobi rotations, partial-pivot LU, Cholesky) rather than delegated to
LAPACK so that thresholds and failure modes are explicit and testable.
"""
from dataclasses import dataclass

import numpy as np

from . import constants as C
from .errors import InvalidInput, NumericalFailure, SingularMatrix


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float64 array or raise InvalidInput."""
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInput(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} has non-finite entries")
    return arr


def as_vector(v, name="vector"):
    arr = np.array(v, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInput(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True)
class SymSpectrum:
    """Eigenvalues (descending) and orthonormal eigenvectors as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


def _check_square(A, name):
    if A.shape[0] != A.shape[1]:
        raise InvalidInput(f"{name} must be square, got shape {A.shape}")


def _off_norm(A):
    return np.linalg.norm(A - np.diag(np.diag(A)))


def sym_eigen(S, tol=C.JACOBI_OFF_TOL, max_sweeps=C.JACOBI_MAX_SWEEPS):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once the off-diagonal Frobenius norm falls below
    ``tol * max(1, ||S||_F)``.
    """
    S = as_matrix(S, "S")
    _check_square(S, "S")
    n = S.shape[0]
    scale = max(1.0, np.linalg.norm(S))
    if np.linalg.norm(S - S.T) > C.SYMMETRY_RTOL * scale:
        raise InvalidInput("S is not symmetric")

    A = 0.5 * (S + S.T)
    V = np.eye(n)
    threshold = tol * scale
    for _ in range(max_sweeps):
        if _off_norm(A) <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                # Golub & Van Loan sym.schur2
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                elif tau >= 0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ap = A[:, p].copy()
                aq = A[:, q]
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :]
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q]
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        if _off_norm(A) > threshold:
            raise NumericalFailure(f"Jacobi did not converge in {max_sweeps} sweeps")

    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return SymSpectrum(eigenvalues=w[order], eigenvectors=V[:, order])


@dataclass(frozen=True)
class LUFactors:
    """Row-pivoted LU: ``A[perm] = L @ U`` packed into one array."""

    lu: np.ndarray
    perm: np.ndarray


def lu_factor(A):
    A = as_matrix(A, "A")
    _check_square(A, "A")
    n = A.shape[0]
    lu = A.copy()
    perm = np.arange(n)
    threshold = C.PIVOT_RTOL * np.linalg.norm(A)
    for k in range(n):
        piv = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[piv, k]) <= threshold:
            raise SingularMatrix(
                f"pivot {abs(lu[piv, k]):.3e} at column {k} below {threshold:.3e}"
            )
        if piv != k:
            lu[[k, piv]] = lu[[piv, k]]
            perm[[k, piv]] = perm[[piv, k]]
        lu[k + 1:, k] /= lu[k, k]
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return LUFactors(lu=lu, perm=perm)


def lu_solve(factors, b):
    lu, perm = factors.lu, factors.perm
    n = lu.shape[0]
    x = np.array(b, dtype=np.float64)[perm]
    for i in range(1, n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1:] @ x[i + 1:]) / lu[i, i]
    return x


def solve_linear(A, b):
    """Solve ``A x = b`` for a vector or a matrix of right-hand sides."""
    b = np.array(b, dtype=np.float64)
    if b.ndim not in (1, 2) or b.shape[0] != np.shape(A)[0]:
        raise InvalidInput(f"rhs shape {b.shape} incompatible with A {np.shape(A)}")
    if not np.all(np.isfinite(b)):
        raise InvalidInput("rhs has non-finite entries")
    return lu_solve(lu_factor(A), b)


def cholesky(S):
    """Lower-triangular L with ``L @ L.T == S`` for symmetric positive definite S."""
    S = as_matrix(S, "S")
    _check_square(S, "S")
    n = S.shape[0]
    L = np.zeros_like(S)
    for j in range(n):
        d = S[j, j] - L[j, :j] @ L[j, :j]
        if d <= 0.0:
            raise NumericalFailure("matrix is not positive definite")
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (S[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def build_Z(M):
    """Orthonormal basis of the complement of the ones vector (Helmert-style).

    Column j (1-based) carries ``1/sqrt(j(j+1))`` in its first j rows and
    ``-j/sqrt(j(j+1))`` in row j+1.
    """
    if int(M) != M or M < 2:
        raise InvalidInput(f"M must be an integer >= 2, got {M}")
    M = int(M)
    Z = np.zeros((M, M - 1))
    for j in range(1, M):
        s = np.sqrt(j * (j + 1.0))
        Z[:j, j - 1] = 1.0 / s
        Z[j, j - 1] = -j / s
    return Z


def build_J(M):
    """Cyclic shift permutation: ones on the superdiagonal and bottom-left."""
    if int(M) != M or M < 1:
        raise InvalidInput(f"M must be an integer >= 1, got {M}")
    M = int(M)
    return np.roll(np.eye(M), 1, axis=1)


def block_ones(M, p):
    """The stacked identity ``1_M (x) I_p`` of shape (M p, p)."""
    return np.kron(np.ones((M, 1)), np.eye(p))
