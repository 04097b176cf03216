"""
Normalized ℓ1 recovery error with optimal column matching.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from utils.errors import DimensionError


@dataclass(frozen=True)
class MatchResult:
    """permutation[k] is the recovered column matched to true column k"""
    error: float
    permutation: np.ndarray
    signs: np.ndarray


def normalize_columns(D: np.ndarray) -> np.ndarray:
    """ℓ1-normalize columns; zero columns stay zero"""
    D = np.asarray(D, dtype=float)
    norms = np.abs(D).sum(axis=0)
    norms[norms == 0] = 1.0
    return D / norms


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Assignment minimizing Σ_k cost[k, perm[k]]"""
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise DimensionError(f"assignment needs a square cost matrix, got shape {cost.shape}")
    rows, cols = linear_sum_assignment(cost)
    permutation = np.empty(cost.shape[0], dtype=int)
    permutation[rows] = cols
    return permutation


def brute_force_assignment(cost: np.ndarray) -> np.ndarray:
    """Exhaustive search over all permutations; for small K only"""
    cost = np.asarray(cost, dtype=float)
    K = cost.shape[0]
    rows = np.arange(K)
    best = min(itertools.permutations(range(K)), key=lambda perm: cost[rows, list(perm)].sum())
    return np.array(best, dtype=int)


def matching_cost(D_hat: np.ndarray, D_true: np.ndarray, allow_sign: bool = False):
    """cost[k, k'] = ‖d̂_k' − d_k‖₁ (minimized over the sign of d̂_k' when allowed)"""
    plus = np.abs(D_true[:, :, None] - D_hat[:, None, :]).sum(axis=0)
    if not allow_sign:
        return plus, np.ones_like(plus)
    minus = np.abs(D_true[:, :, None] + D_hat[:, None, :]).sum(axis=0)
    signs = np.where(minus < plus, -1.0, 1.0)
    return np.minimum(plus, minus), signs


def l1_error(D_hat: np.ndarray, D_true: np.ndarray, allow_sign: bool = False) -> MatchResult:
    """min over permutations of (1/2K) Σ_k ‖d̂_π(k) − d_k‖₁ on ℓ1-normalized columns"""
    D_hat = np.asarray(D_hat, dtype=float)
    D_true = np.asarray(D_true, dtype=float)
    if D_hat.shape != D_true.shape or D_hat.ndim != 2:
        raise DimensionError(f"shape mismatch: recovered {D_hat.shape} vs true {D_true.shape}")
    K = D_true.shape[1]
    cost, signs = matching_cost(normalize_columns(D_hat), normalize_columns(D_true), allow_sign)
    permutation = hungarian(cost)
    rows = np.arange(K)
    error = float(cost[rows, permutation].sum() / (2 * K))
    return MatchResult(error=min(max(error, 0.0), 1.0), permutation=permutation,
                       signs=signs[rows, permutation])


def stacked_l1_error(D1_hat: np.ndarray, D2_hat: np.ndarray, D1_true: np.ndarray,
                     D2_true: np.ndarray, allow_sign: bool = False) -> MatchResult:
    """Error on the stacked loadings [D1; D2], one permutation for both views"""
    return l1_error(np.vstack([D1_hat, D2_hat]), np.vstack([D1_true, D2_true]), allow_sign)
