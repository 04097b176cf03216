"""
Dense linear-algebra kernel: truncated and randomized SVD, non-symmetric
eigendecomposition, pseudo-inverse and the elementary rotation builders used
by the joint diagonalizer.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from utils.errors import DimensionError, EigenSolverError, RankDeficiencyError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, sp.spmatrix]


@dataclass(frozen=True)
class TruncatedSvd:
    """Top-K singular triplets, singular values nonincreasing"""
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.singular_values)

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.V.T


@dataclass(frozen=True)
class FactoredMatrix:
    """Implicit product ``left @ right.T``; panels may be dense or sparse"""
    left: ArrayLike
    right: ArrayLike

    def __post_init__(self):
        if self.left.shape[1] != self.right.shape[1]:
            raise DimensionError(
                f"factor panels disagree on inner dimension: {self.left.shape} vs {self.right.shape}"
            )

    @property
    def shape(self) -> Tuple[int, int]:
        return self.left.shape[0], self.right.shape[0]

    def matmat(self, block: np.ndarray) -> np.ndarray:
        """A @ block without forming A"""
        return np.asarray(self.left @ np.asarray(self.right.T @ block))

    def rmatmat(self, block: np.ndarray) -> np.ndarray:
        """A.T @ block without forming A"""
        return np.asarray(self.right @ np.asarray(self.left.T @ block))

    def to_dense(self) -> np.ndarray:
        left = self.left.toarray() if sp.issparse(self.left) else self.left
        right = self.right.toarray() if sp.issparse(self.right) else self.right
        return np.asarray(left @ right.T)


def as_matrix(A, name: str = "matrix") -> np.ndarray:
    """Finite 2-D float array"""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or min(A.shape) < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DimensionError(f"{name} has non-finite entries")
    return A


def _check_rank_request(K: int, rows: int, cols: int) -> None:
    if K < 1 or K > min(rows, cols):
        raise DimensionError(f"K={K} must lie in [1, {min(rows, cols)}] for a {rows}x{cols} matrix")


def _fix_signs(U: np.ndarray, V: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # largest-magnitude entry of each left vector made positive
    pivots = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivots, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def svd_topk(A, K: int) -> TruncatedSvd:
    """Best rank-K approximation of a dense matrix, singular vector signs fixed"""
    A = as_matrix(A)
    _check_rank_request(K, *A.shape)
    U, s, Vt = scipy.linalg.svd(A, full_matrices=False)
    U, V = _fix_signs(U[:, :K], Vt[:K].T)
    return TruncatedSvd(U=U, singular_values=s[:K].copy(), V=V)


def gaussian_test_matrix(n: int, columns: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((n, columns))


def observed_rank(singular_values: np.ndarray, rank_tol: float) -> int:
    """Number of singular values above ``rank_tol`` relative to the largest"""
    if len(singular_values) == 0 or singular_values[0] <= 0:
        return 0
    return int(np.sum(singular_values > rank_tol * singular_values[0]))


def randomized_svd_factored(
    left: ArrayLike,
    right: ArrayLike,
    K: int,
    oversample: int = 10,
    power_iterations: int = 1,
    rng: Optional[Union[int, np.random.Generator]] = None,
    rank_tol: float = 1e-10,
) -> TruncatedSvd:
    """
    Approximate top-K SVD of ``left @ right.T`` through a Gaussian range sketch.

    The sketch width is K + oversample, capped at the smaller dimension of the
    product. One QR-stabilized power iteration is applied by default.
    """
    product = FactoredMatrix(left, right)
    rows, cols = product.shape
    _check_rank_request(K, rows, cols)
    width = min(K + oversample, rows, cols)
    rng = np.random.default_rng(rng)

    basis, _ = np.linalg.qr(product.matmat(gaussian_test_matrix(cols, width, rng)))
    for _ in range(power_iterations):
        co_basis, _ = np.linalg.qr(product.rmatmat(basis))
        basis, _ = np.linalg.qr(product.matmat(co_basis))

    # basis.T @ A, a width x cols panel
    small = product.rmatmat(basis).T
    u_small, s, vt = scipy.linalg.svd(small, full_matrices=False)
    rank = observed_rank(s, rank_tol)
    if rank < K:
        raise RankDeficiencyError(
            f"implicit product has numerical rank {rank} < K={K}", observed_rank=rank
        )
    U, V = _fix_signs(basis @ u_small[:, :K], vt[:K].T)
    return TruncatedSvd(U=U, singular_values=s[:K].copy(), V=V)


def eig_nonsymmetric(B) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigenvalues and right eigenvectors of a square matrix.

    Arrays are real when every eigenvalue is real, complex otherwise.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise DimensionError(f"eigendecomposition needs a square matrix, got shape {B.shape}")
    if not np.all(np.isfinite(B)):
        raise EigenSolverError("matrix has non-finite entries")
    try:
        values, vectors = scipy.linalg.eig(B)
    except np.linalg.LinAlgError as e:
        raise EigenSolverError(f"QR iteration did not converge: {e}") from e
    if np.all(values.imag == 0):
        return values.real, np.real(vectors)
    return values, vectors


def pseudo_inverse(A) -> np.ndarray:
    """Moore-Penrose inverse with a relative cutoff of max(shape) * eps"""
    return scipy.linalg.pinv(as_matrix(A))


def condition_number(A) -> float:
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        return float("inf")
    s = scipy.linalg.svdvals(A)
    if s[-1] == 0:
        return float("inf")
    return float(s[0] / s[-1])


def givens_rotation(K: int, p: int, q: int, theta: float) -> np.ndarray:
    """Identity with [[c, s], [-s, c]] in the (p, q) plane"""
    U = np.eye(K)
    c, s = np.cos(theta), np.sin(theta)
    U[p, p], U[p, q], U[q, p], U[q, q] = c, s, -s, c
    return U


def shear_transform(K: int, p: int, q: int, y: float) -> np.ndarray:
    """Identity with [[cosh, sinh], [sinh, cosh]] in the (p, q) plane"""
    S = np.eye(K)
    ch, sh = np.cosh(y), np.sinh(y)
    S[p, p], S[p, q], S[q, p], S[q, q] = ch, sh, sh, ch
    return S
