"""
Finite-sample estimators of generalized expectations, generalized
cross-covariances, the unbiased cross-covariance and whitened T-cumulant
projections, plus a dense tensor oracle for tiny problems.

Views are stored one column per sample. Discrete views may live in a
compressed-column sparse matrix; every estimator accepts both storages.
"""

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from utils.errors import (
    DataFormatError, DegenerateWeightsError, DimensionError,
    InsufficientSamplesError, SizeError,
)
from utils.linalg import FactoredMatrix

if TYPE_CHECKING:
    from services.whitening import WhiteningPair

logger = logging.getLogger(__name__)

NAIVE_TENSOR_LIMIT = 10_000


@dataclass(frozen=True)
class ViewMatrix:
    """One data view: M variables x N samples"""
    data: object
    discrete: bool = False

    def __post_init__(self):
        data = self.data
        if sp.issparse(data):
            data = sp.csc_matrix(data, dtype=float)
            data.sum_duplicates()
            values = data.data
            if np.any(values < 0) or np.any(values != np.round(values)):
                raise DataFormatError("sparse views hold nonnegative integer counts")
            object.__setattr__(self, "discrete", True)
        else:
            data = np.asarray(data, dtype=float)
            if data.ndim != 2:
                raise DimensionError(f"view must be 2-D (variables x samples), got shape {data.shape}")
            values = data
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise DimensionError(f"view is empty, shape {data.shape}")
        if not np.all(np.isfinite(values)):
            raise DataFormatError("view has non-finite entries")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_dense(cls, array, discrete: Optional[bool] = None) -> "ViewMatrix":
        """Dense view; ``discrete`` is inferred from the values when omitted"""
        array = np.asarray(array, dtype=float)
        if discrete is None:
            discrete = bool(np.all(array >= 0) and np.all(array == np.round(array)))
        return cls(array, discrete=discrete)

    @classmethod
    def from_counts(cls, variables: Sequence[int], samples: Sequence[int],
                    counts: Sequence[float], shape: Tuple[int, int]) -> "ViewMatrix":
        """Sparse count view from 0-indexed (variable, sample, count) triplets"""
        matrix = sp.csc_matrix((np.asarray(counts, dtype=float),
                                (np.asarray(variables), np.asarray(samples))), shape=shape)
        return cls(matrix, discrete=True)

    @property
    def M(self) -> int:
        return self.data.shape[0]

    @property
    def N(self) -> int:
        return self.data.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.data)

    @property
    def nnz(self) -> int:
        if self.is_sparse:
            return self.data.nnz
        return int(np.count_nonzero(self.data))

    def abs_sum(self) -> float:
        if self.is_sparse:
            return float(np.abs(self.data.data).sum())
        return float(np.abs(self.data).sum())

    def mean(self) -> np.ndarray:
        return np.asarray(self.data.mean(axis=1)).ravel()

    def weighted_mean(self, weights: np.ndarray) -> np.ndarray:
        return np.asarray(self.data @ weights).ravel()

    def project(self, v: np.ndarray) -> np.ndarray:
        """Per-sample scores vᵀx_n"""
        return np.asarray(self.data.T @ v).ravel()

    def transform(self, L: np.ndarray) -> np.ndarray:
        """L X as a dense K x N panel"""
        if self.is_sparse:
            return np.asarray((self.data.T @ L.T).T)
        return L @ self.data

    def to_dense(self) -> np.ndarray:
        if self.is_sparse:
            return self.data.toarray()
        return self.data


@dataclass(frozen=True)
class ProcessingPoint:
    """Stacked evaluation point t = [t1; t2]"""
    t1: np.ndarray
    t2: np.ndarray
    label: str = "t0"

    @classmethod
    def zero(cls, M1: int, M2: int) -> "ProcessingPoint":
        return cls(np.zeros(M1), np.zeros(M2), "t0")

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.t1) or np.any(self.t2))

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.t1, self.t2])


@dataclass
class GenMoments:
    """Generalized expectations and S-covariance at one processing point"""
    gen_mean1: np.ndarray
    gen_mean2: np.ndarray
    gen_cross_cov: np.ndarray
    effective_samples: float = field(default=0.0)


def check_aligned(X1: ViewMatrix, X2: ViewMatrix, min_samples: int = 1) -> int:
    if X1.N != X2.N:
        raise DimensionError(f"views are not sample-aligned: N1={X1.N}, N2={X2.N}")
    if X1.N < min_samples:
        raise InsufficientSamplesError(f"need at least {min_samples} samples, got {X1.N}")
    return X1.N


def normalized_weights(exponents: np.ndarray, min_effective_samples: float = 1.0) -> Tuple[np.ndarray, float]:
    """
    Weights proportional to exp(exponents), max-subtracted, summing to one.

    Returns the weights and their effective sample size 1 / Σ p².
    """
    if not np.all(np.isfinite(exponents)):
        raise DegenerateWeightsError("non-finite exponents; processing point too large for the data scale")
    w = np.exp(exponents - exponents.max())
    total = w.sum()
    if not np.isfinite(total) or total <= 0:
        raise DegenerateWeightsError("all weights underflow after stabilization")
    p = w / total
    effective = float(1.0 / np.dot(p, p))
    if effective < min_effective_samples:
        raise DegenerateWeightsError(
            f"weights concentrate on {effective:.2f} effective samples (< {min_effective_samples})"
        )
    return p, effective


def _check_point(X1: ViewMatrix, X2: ViewMatrix, t: ProcessingPoint) -> None:
    if len(t.t1) != X1.M or len(t.t2) != X2.M:
        raise DimensionError(
            f"processing point blocks ({len(t.t1)}, {len(t.t2)}) do not match views ({X1.M}, {X2.M})"
        )


def point_weights(X1: ViewMatrix, X2: ViewMatrix, t: ProcessingPoint,
                  min_effective_samples: float = 1.0) -> Tuple[np.ndarray, float]:
    _check_point(X1, X2, t)
    if t.is_zero:
        return np.full(X1.N, 1.0 / X1.N), float(X1.N)
    return normalized_weights(X1.project(t.t1) + X2.project(t.t2), min_effective_samples)


def gen_expectation_hat(X: ViewMatrix, t: np.ndarray) -> np.ndarray:
    """Weighted mean Σ x_n w_n / Σ w_n with w_n = exp(tᵀx_n)"""
    t = np.asarray(t, dtype=float)
    if t.shape != (X.M,):
        raise DimensionError(f"t has length {t.size}, view has M={X.M}")
    if not np.any(t):
        return X.mean()
    weights, _ = normalized_weights(X.project(t))
    return X.weighted_mean(weights)


def gen_moments(X1: ViewMatrix, X2: ViewMatrix, t: ProcessingPoint,
                min_effective_samples: float = 1.0) -> GenMoments:
    """Generalized means and biased generalized S-covariance at t"""
    check_aligned(X1, X2, min_samples=2)
    p, effective = point_weights(X1, X2, t, min_effective_samples)
    m1 = X1.weighted_mean(p)
    m2 = X2.weighted_mean(p)
    if X1.is_sparse or X2.is_sparse:
        left = X1.data @ sp.diags(p) if X1.is_sparse else X1.data * p
        second = left @ X2.data.T
        if sp.issparse(second):
            second = second.toarray()
        cross = np.asarray(second) - np.outer(m1, m2)
    else:
        Y1 = X1.data - m1[:, None]
        Y2 = X2.data - m2[:, None]
        cross = (Y1 * p) @ Y2.T
    return GenMoments(m1, m2, np.asarray(cross), effective)


def gen_cross_covariance_hat(X1: ViewMatrix, X2: ViewMatrix, t: ProcessingPoint,
                             min_effective_samples: float = 1.0) -> np.ndarray:
    return gen_moments(X1, X2, t, min_effective_samples).gen_cross_cov


def whitened_cross_covariance(X1: ViewMatrix, X2: ViewMatrix, L1: np.ndarray, L2: np.ndarray,
                              t: ProcessingPoint, min_effective_samples: float = 1.0) -> np.ndarray:
    """L1 S12(t) L2ᵀ computed from K x N panels, never forming M1 x M2"""
    check_aligned(X1, X2, min_samples=2)
    p, _ = point_weights(X1, X2, t, min_effective_samples)
    A = X1.transform(L1)
    B = X2.transform(L2)
    Ac = A - (A @ p)[:, None]
    Bc = B - (B @ p)[:, None]
    return (Ac * p) @ Bc.T


def s12_factored(X1: ViewMatrix, X2: ViewMatrix) -> FactoredMatrix:
    """Ŝ12 = η1 [X1 X2ᵀ − N m1 m2ᵀ] as panels [X1, m1] and η1 [X2, −N m2]"""
    N = check_aligned(X1, X2, min_samples=2)
    eta1 = 1.0 / (N - 1)
    m1 = X1.mean()[:, None]
    m2 = X2.mean()[:, None]
    if X1.is_sparse or X2.is_sparse:
        left = sp.hstack([sp.csc_matrix(X1.data), sp.csc_matrix(m1)]).tocsr()
        right = sp.hstack([sp.csc_matrix(X2.data) * eta1, sp.csc_matrix(-eta1 * N * m2)]).tocsr()
    else:
        left = np.hstack([X1.data, m1])
        right = np.hstack([eta1 * X2.data, -eta1 * N * m2])
    return FactoredMatrix(left, right)


def s12_hat(X1: ViewMatrix, X2: ViewMatrix) -> np.ndarray:
    """Unbiased cross-covariance estimator with η1 = 1 / (N − 1)"""
    N = check_aligned(X1, X2, min_samples=2)
    if X1.is_sparse or X2.is_sparse:
        return s12_factored(X1, X2).to_dense()
    Y1 = X1.data - X1.mean()[:, None]
    Y2 = X2.data - X2.mean()[:, None]
    return (Y1 @ Y2.T) / (N - 1)


def whitened_s12(X1: ViewMatrix, X2: ViewMatrix, L1: np.ndarray, L2: np.ndarray) -> np.ndarray:
    """L1 Ŝ12 L2ᵀ from K x N panels"""
    N = check_aligned(X1, X2, min_samples=2)
    A = X1.transform(L1)
    B = X2.transform(L2)
    Ac = A - A.mean(axis=1, keepdims=True)
    Bc = B - B.mean(axis=1, keepdims=True)
    return (Ac @ Bc.T) / (N - 1)


def _check_view_index(j: int) -> None:
    if j not in (1, 2):
        raise DimensionError(f"view index must be 1 or 2, got {j}")


def _check_whitening(X1: ViewMatrix, X2: ViewMatrix, W: "WhiteningPair", u: np.ndarray) -> np.ndarray:
    if W.W1.shape[1] != X1.M or W.W2.shape[1] != X2.M:
        raise DimensionError(
            f"whitening pair shapes {W.W1.shape}, {W.W2.shape} do not match views ({X1.M}, {X2.M})"
        )
    u = np.asarray(u, dtype=float)
    if u.shape != (W.K,):
        raise DimensionError(f"projection vector has length {u.size}, expected K={W.K}")
    return u


def whitened_t_projection(X1: ViewMatrix, X2: ViewMatrix, W: "WhiteningPair",
                          u: np.ndarray, j: int) -> np.ndarray:
    """
    W1 T12j(v) W2ᵀ for the unbiased T-cumulant estimator with v = Wjᵀu.

    The third k-statistic of (W1x1, W2x2, vᵀxj) is formed on K x N panels,
    then the Poisson correction W1 diag(v) Ŝ12 W2ᵀ (j = 1) or
    W1 Ŝ12 diag(v) W2ᵀ (j = 2) is subtracted.
    """
    _check_view_index(j)
    u = _check_whitening(X1, X2, W, u)
    N = check_aligned(X1, X2, min_samples=3)
    eta2 = N / ((N - 1.0) * (N - 2.0))

    A = X1.transform(W.W1)
    B = X2.transform(W.W2)
    v = (W.W1 if j == 1 else W.W2).T @ u
    c = (X1 if j == 1 else X2).project(v)

    Ac = A - A.mean(axis=1, keepdims=True)
    Bc = B - B.mean(axis=1, keepdims=True)
    cc = c - c.mean()
    third = eta2 * (Ac * cc) @ Bc.T

    if j == 1:
        correction = whitened_s12(X1, X2, W.W1 * v, W.W2)
    else:
        correction = whitened_s12(X1, X2, W.W1, W.W2 * v)
    return third - correction


def naive_t_cumulant(X1: ViewMatrix, X2: ViewMatrix, j: int) -> np.ndarray:
    """Dense M1 x M2 x Mj T-cumulant; only for tiny dimensions"""
    _check_view_index(j)
    Xj = X1 if j == 1 else X2
    size = X1.M * X2.M * Xj.M
    if size > NAIVE_TENSOR_LIMIT:
        raise SizeError(f"dense tensor would have {size} entries (limit {NAIVE_TENSOR_LIMIT})")
    N = check_aligned(X1, X2, min_samples=3)

    Y1 = X1.to_dense() - X1.mean()[:, None]
    Y2 = X2.to_dense() - X2.mean()[:, None]
    Yj = Y1 if j == 1 else Y2
    k3 = N / ((N - 1.0) * (N - 2.0)) * np.einsum("an,bn,cn->abc", Y1, Y2, Yj)
    S = (Y1 @ Y2.T) / (N - 1)

    diagonal = np.arange(Xj.M)
    if j == 1:
        k3[diagonal, :, diagonal] -= S
    else:
        k3[:, diagonal, diagonal] -= S
    return k3


def project_tensor(T: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Contract the third mode: Σ_m3 T[:, :, m3] v[m3]"""
    T = np.asarray(T, dtype=float)
    v = np.asarray(v, dtype=float)
    if T.ndim != 3 or v.shape != (T.shape[2],):
        raise DimensionError(f"cannot project tensor of shape {T.shape} on vector of length {v.size}")
    return np.tensordot(T, v, axes=([2], [0]))


def gencov_t_approx(X1: ViewMatrix, X2: ViewMatrix, W: "WhiteningPair", u: np.ndarray,
                    j: int, delta: float, min_effective_samples: float = 1.0) -> np.ndarray:
    """
    Finite-difference stand-in for whitened_t_projection:
    [W1 S12(δ tj) W2ᵀ − W1 S12(0) W2ᵀ] / δ minus the diag(v) correction,
    all from biased generalized covariances.
    """
    _check_view_index(j)
    u = _check_whitening(X1, X2, W, u)
    if delta <= 0:
        raise DimensionError(f"delta must be positive, got {delta}")
    v = (W.W1 if j == 1 else W.W2).T @ u
    zero = ProcessingPoint.zero(X1.M, X2.M)
    if j == 1:
        point = ProcessingPoint(delta * v, np.zeros(X2.M), "approx")
    else:
        point = ProcessingPoint(np.zeros(X1.M), delta * v, "approx")

    shifted = whitened_cross_covariance(X1, X2, W.W1, W.W2, point, min_effective_samples)
    base = whitened_cross_covariance(X1, X2, W.W1, W.W2, zero)
    if j == 1:
        correction = whitened_cross_covariance(X1, X2, W.W1 * v, W.W2, zero)
    else:
        correction = whitened_cross_covariance(X1, X2, W.W1, W.W2 * v, zero)
    return (shifted - base) / delta - correction
