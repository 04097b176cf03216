"""
Non-orthogonal joint diagonalization by similarity.

Each pivot (p, q) applies a hyperbolic shear followed by a Givens rotation:
Q <- Q S U and A <- Uᵀ S⁻¹ A S U for every matrix of the set, so the
diagonalized set is Q⁻¹ A_p Q. The shear minimizes the sum of the two
squared (p, q) / (q, p) entries and the rotation minimizes the off-diagonal
mass in the pivot plane.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from config import FIT_DEFAULTS
from utils.errors import DimensionError, IllConditionedError
from utils.linalg import condition_number, eig_nonsymmetric, givens_rotation, shear_transform

logger = logging.getLogger(__name__)

# Off below this fraction of the normality measure is treated as exact
OFF_FLOOR = 1e-26


@dataclass
class TargetSet:
    """P square K x K matrices stacked as a (P, K, K) array"""
    matrices: np.ndarray
    labels: List[str] = field(default_factory=list)

    def __post_init__(self):
        matrices = np.asarray(self.matrices, dtype=float)
        if matrices.ndim == 2:
            matrices = matrices[None]
        if matrices.ndim != 3 or matrices.shape[1] != matrices.shape[2] or matrices.shape[0] < 1:
            raise DimensionError(f"target set must hold square matrices, got shape {matrices.shape}")
        if not np.all(np.isfinite(matrices)):
            raise DimensionError("target set has non-finite entries")
        if not self.labels:
            self.labels = [f"target{i}" for i in range(matrices.shape[0])]
        if len(self.labels) != matrices.shape[0]:
            raise DimensionError(f"{len(self.labels)} labels for {matrices.shape[0]} matrices")
        self.matrices = matrices

    @classmethod
    def from_matrices(cls, matrices: Sequence[np.ndarray], labels: Optional[Sequence[str]] = None) -> "TargetSet":
        return cls(np.stack([np.asarray(m, dtype=float) for m in matrices]), list(labels or []))

    @property
    def P(self) -> int:
        return self.matrices.shape[0]

    @property
    def K(self) -> int:
        return self.matrices.shape[1]

    def __len__(self) -> int:
        return self.P

    def similarity(self, V: np.ndarray) -> "TargetSet":
        """The set {V⁻¹ A_p V}"""
        return TargetSet(np.linalg.solve(V[None], self.matrices @ V), list(self.labels))

    def diagonals(self) -> np.ndarray:
        """P x K array of diagonal entries"""
        return np.einsum("pii->pi", self.matrices).copy()


@dataclass
class Diagonalizer:
    Q: np.ndarray
    sweeps_used: int
    final_off: float
    converged: bool = True
    method: str = "jdtm"
    off_trace: List[float] = field(default_factory=list)
    normality_trace: List[float] = field(default_factory=list)

    @property
    def condition(self) -> float:
        return condition_number(self.Q)

    def trace_frame(self) -> pd.DataFrame:
        """Per-sweep Off and normality values, sweep 0 being the input"""
        return pd.DataFrame({
            "sweep": np.arange(len(self.off_trace)),
            "off": self.off_trace,
            "normality": self.normality_trace,
        })


SetLike = Union[TargetSet, np.ndarray]


def _stack(S: SetLike) -> np.ndarray:
    if isinstance(S, TargetSet):
        return S.matrices
    A = np.asarray(S, dtype=float)
    return A[None] if A.ndim == 2 else A


def off_measure(S: SetLike) -> float:
    A = _stack(S)
    mask = ~np.eye(A.shape[1], dtype=bool)
    return float(np.sum(A[:, mask] ** 2))


def normality_measure(S: SetLike) -> float:
    return float(np.sum(_stack(S) ** 2))


def _check_pivot(A: np.ndarray, p: int, q: int) -> None:
    if not 0 <= p < q < A.shape[1]:
        raise DimensionError(f"pivot ({p}, {q}) invalid for K={A.shape[1]}")


def optimal_givens_angle(S: SetLike, p: int, q: int) -> float:
    """
    Rotation angle in [-π/4, π/4] minimizing the off-diagonal mass of the set in
    the (p, q) plane.

    The rotated diagonal gap is g_pᵀ[cos 2θ, sin 2θ] with
    g_p = [a_pp − a_qq, −(a_pq + a_qp)]; the optimum is the dominant
    eigenvector of Σ g_p g_pᵀ.
    """
    A = _stack(S)
    _check_pivot(A, p, q)
    gap = A[:, p, p] - A[:, q, q]
    mixed = -(A[:, p, q] + A[:, q, p])
    G = np.array([[gap @ gap, gap @ mixed], [gap @ mixed, mixed @ mixed]])
    values, vectors = np.linalg.eigh(G)
    if values[1] <= 0 or values[1] - values[0] <= 1e-15 * values[1]:
        return 0.0
    w = vectors[:, 1]
    if w[0] < 0:
        w = -w
    return 0.5 * math.atan2(w[1], w[0])


def shear_surrogate(S: SetLike, p: int, q: int, y: float) -> float:
    """Σ (a'_pq)² + (a'_qp)² after the shear S⁻¹ A S with parameter y"""
    A = _stack(S)
    a, d = A[:, p, p], A[:, q, q]
    b, g = A[:, p, q], A[:, q, p]
    ch, sh = math.cosh(y), math.sinh(y)
    upper = b * ch ** 2 - g * sh ** 2 + (a - d) * ch * sh
    lower = g * ch ** 2 - b * sh ** 2 + (d - a) * ch * sh
    return float(upper @ upper + lower @ lower)


def optimal_shear(S: SetLike, p: int, q: int, y_max: Optional[float] = None) -> float:
    """
    Shear parameter minimizing the two-entry surrogate, clamped to |y| <= y_max.

    With e = a_pq − a_qp and f = a_pp − a_qq the surrogate equals
    ½Σ(a_pq + a_qp)² + ½Σ(e cosh 2y + f sinh 2y)², whose y-dependent part is
    α cosh 4y + β sinh 4y + const with α = (Σe² + Σf²)/2 and β = Σef.
    """
    A = _stack(S)
    _check_pivot(A, p, q)
    y_max = FIT_DEFAULTS["y_max"] if y_max is None else y_max
    if y_max <= 0:
        return 0.0

    e = A[:, p, q] - A[:, q, p]
    f = A[:, p, p] - A[:, q, q]
    alpha = 0.5 * (e @ e + f @ f)
    beta = float(e @ f)
    if alpha <= 0:
        return 0.0
    ratio = -beta / alpha
    if abs(ratio) < 1.0:
        y = 0.25 * math.atanh(ratio)
    else:
        # surrogate monotone in y: walk to the clamp
        y = math.copysign(y_max, ratio)
    y = min(max(y, -y_max), y_max)

    if y == 0.0 or shear_surrogate(A, p, q, y) > shear_surrogate(A, p, q, 0.0):
        return 0.0
    return y


def _apply_plane(A: np.ndarray, Q: np.ndarray, p: int, q: int, T: np.ndarray, T_inv: np.ndarray) -> None:
    """A <- T⁻¹ A T for every matrix of the set and Q <- Q T, T acting on the (p, q) plane"""
    plane = [p, q]
    A[:, :, plane] = A[:, :, plane] @ T
    A[:, plane, :] = T_inv @ A[:, plane, :]
    Q[:, plane] = Q[:, plane] @ T


def nojd_jdtm(
    S: SetLike,
    max_sweeps: Optional[int] = None,
    tol: Optional[float] = None,
    y_max: Optional[float] = None,
    max_condition: Optional[float] = None,
) -> Diagonalizer:
    """
    Jacobi-like joint diagonalization with lexicographic pivots.

    Stops when a sweep changes Off by less than ``tol`` relative to its previous
    value, when Off reaches round-off level, or after ``max_sweeps``. A run that
    stops on the sweep limit returns the lowest-Off diagonalizer seen with
    ``converged=False``.
    """
    max_sweeps = FIT_DEFAULTS["max_sweeps"] if max_sweeps is None else max_sweeps
    tol = FIT_DEFAULTS["tol"] if tol is None else tol
    y_max = FIT_DEFAULTS["y_max"] if y_max is None else y_max
    max_condition = FIT_DEFAULTS["max_condition"] if max_condition is None else max_condition

    A = _stack(S).copy()
    K = A.shape[1]
    Q = np.eye(K)
    off = off_measure(A)
    off_trace = [off]
    normality_trace = [normality_measure(A)]
    best_off, best_Q = off, Q.copy()

    if K == 1:
        return Diagonalizer(Q, 0, 0.0, True, "jdtm", off_trace, normality_trace)

    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        for p in range(K - 1):
            for q in range(p + 1, K):
                y = optimal_shear(A, p, q, y_max)
                if y != 0.0:
                    _apply_plane(A, Q, p, q, shear_transform(2, 0, 1, y), shear_transform(2, 0, 1, -y))
                theta = optimal_givens_angle(A, p, q)
                if theta != 0.0:
                    U = givens_rotation(2, 0, 1, theta)
                    _apply_plane(A, Q, p, q, U, U.T)

        new_off = off_measure(A)
        normality = normality_measure(A)
        off_trace.append(new_off)
        normality_trace.append(normality)
        logger.debug("sweep %d: off=%.6e normality=%.6e", sweeps, new_off, normality)

        cond = condition_number(Q)
        if cond > max_condition:
            raise IllConditionedError(
                f"diagonalizer condition number {cond:.3e} exceeds {max_condition:.1e} at sweep {sweeps}",
                sweep=sweeps, condition=cond,
            )
        if new_off < best_off:
            best_off, best_Q = new_off, Q.copy()

        if new_off <= OFF_FLOOR * normality or abs(off - new_off) <= tol * off:
            converged = True
            off = new_off
            break
        off = new_off

    if converged:
        return Diagonalizer(Q, sweeps, off, True, "jdtm", off_trace, normality_trace)

    logger.warning("joint diagonalization stopped after %d sweeps without meeting tol=%g (off=%.3e)",
                   sweeps, tol, best_off)
    return Diagonalizer(best_Q, sweeps, best_off, False, "jdtm", off_trace, normality_trace)


def spectral_diagonalizer(B: np.ndarray, imaginary_ratio: Optional[float] = None) -> Diagonalizer:
    """
    Eigenvector matrix of a single target.

    Complex conjugate pairs (v, v̄) are replaced by the real basis (Re v, Im v̄),
    which spans the same invariant plane and keeps Q invertible.
    """
    imaginary_ratio = FIT_DEFAULTS["imaginary_mass_ratio"] if imaginary_ratio is None else imaginary_ratio
    values, vectors = eig_nonsymmetric(B)
    if np.iscomplexobj(vectors):
        imag_mass = np.linalg.norm(vectors.imag)
        real_mass = np.linalg.norm(vectors.real)
        if imag_mass > imaginary_ratio * real_mass:
            logger.warning("eigenvectors carry imaginary mass %.3g of the real mass; keeping real parts",
                           imag_mass / max(real_mass, np.finfo(float).tiny))
        Q = vectors.real.copy()
        partners = np.flatnonzero(values.imag < 0)
        Q[:, partners] = vectors[:, partners].imag
    else:
        Q = np.asarray(vectors, dtype=float)

    target = TargetSet(B)
    try:
        diagonalized = target.similarity(Q)
    except np.linalg.LinAlgError:
        logger.warning("eigenvector matrix is singular")
        return Diagonalizer(Q, 0, float("inf"), False, "spectral",
                            [off_measure(target)], [normality_measure(target)])
    return Diagonalizer(Q, 0, off_measure(diagonalized), True, "spectral",
                        [off_measure(target), off_measure(diagonalized)],
                        [normality_measure(target), normality_measure(diagonalized)])
