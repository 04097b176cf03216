"""
Whitening pairs (W1, W2) with W1 Ŝ12 W2ᵀ = I_K.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from config import FIT_DEFAULTS
from utils.errors import ConfigError, RankDeficiencyError
from utils.linalg import (
    FactoredMatrix, TruncatedSvd, observed_rank, randomized_svd_factored, svd_topk,
)

logger = logging.getLogger(__name__)

WHITENING_METHODS = ("exact", "randomized")


@dataclass(frozen=True)
class WhiteningPair:
    W1: np.ndarray
    W2: np.ndarray
    singular_values: np.ndarray

    @property
    def K(self) -> int:
        return self.W1.shape[0]

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        """W1 · matrix · W2ᵀ"""
        return self.W1 @ matrix @ self.W2.T

    def residual(self, s12: Union[np.ndarray, FactoredMatrix]) -> float:
        """‖W1 Ŝ12 W2ᵀ − I‖_F"""
        if isinstance(s12, FactoredMatrix):
            whitened = s12.rmatmat(self.W1.T).T @ self.W2.T
        else:
            whitened = self.apply(s12)
        return float(np.linalg.norm(whitened - np.eye(self.K)))


def compute_whitening(
    s12: Union[np.ndarray, FactoredMatrix],
    K: int,
    method: str = "exact",
    rank_tol: Optional[float] = None,
    rng: Optional[Union[int, np.random.Generator]] = None,
) -> WhiteningPair:
    """W1 = Λ U_Kᵀ and W2 = Λ V_Kᵀ with Λ = diag(σ^{-1/2})"""
    if method not in WHITENING_METHODS:
        raise ConfigError(f"unknown whitening method '{method}', expected one of {WHITENING_METHODS}")

    if method == "exact":
        tol = FIT_DEFAULTS["rank_tol_exact"] if rank_tol is None else rank_tol
        dense = s12.to_dense() if isinstance(s12, FactoredMatrix) else s12
        svd = svd_topk(dense, K)
    else:
        tol = FIT_DEFAULTS["rank_tol_randomized"] if rank_tol is None else rank_tol
        if not isinstance(s12, FactoredMatrix):
            s12 = FactoredMatrix(np.asarray(s12, dtype=float), np.eye(np.shape(s12)[1]))
        svd = randomized_svd_factored(
            s12.left, s12.right, K,
            oversample=FIT_DEFAULTS["oversample"],
            power_iterations=FIT_DEFAULTS["power_iterations"],
            rng=rng,
            rank_tol=tol,
        )

    _check_effective_rank(svd, K, tol)
    scale = 1.0 / np.sqrt(svd.singular_values)
    pair = WhiteningPair(
        W1=scale[:, None] * svd.U.T,
        W2=scale[:, None] * svd.V.T,
        singular_values=svd.singular_values,
    )
    logger.debug("whitening (%s): singular values %s", method, np.array2string(svd.singular_values, precision=4))
    return pair


def _check_effective_rank(svd: TruncatedSvd, K: int, tol: float) -> None:
    rank = observed_rank(svd.singular_values, tol)
    if rank < K:
        raise RankDeficiencyError(
            f"cross-covariance has effective rank {rank} < K={K} (tolerance {tol:g} relative to σ1)",
            observed_rank=rank,
        )
