"""
End-to-end moment-matching estimators for DCCA, NCCA and MCCA.

A fit runs: cross-covariance -> whitening -> processing points -> target
matrices -> joint (or spectral) diagonalization -> loading recovery.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import FIT_DEFAULTS
from services.evaluation import normalize_columns
from services.model_kind import ModelKind
from services.moments import (
    ProcessingPoint, ViewMatrix, check_aligned, gencov_t_approx, s12_factored, s12_hat,
    whitened_cross_covariance, whitened_s12, whitened_t_projection,
)
from services.nojd import Diagonalizer, TargetSet, nojd_jdtm, spectral_diagonalizer
from services.whitening import WHITENING_METHODS, WhiteningPair, compute_whitening
from utils.errors import (
    CCAError, ConfigError, DegenerateWeightsError, InsufficientTargetsError, RecoveryError, ScaleError,
)
from utils.linalg import FactoredMatrix, condition_number, eig_nonsymmetric, pseudo_inverse

logger = logging.getLogger(__name__)

METHODS = ("cumulant", "gencov", "spectral")
MAX_RECOVERY_CONDITION = 1e12


@contextmanager
def stage(name: str):
    """Label errors escaping the block with the pipeline stage"""
    try:
        yield
    except CCAError as e:
        if e.stage is None:
            e.stage = name
        logger.error("stage '%s' failed: %s", name, e.message)
        raise


@dataclass
class FitConfig:
    K: int
    method: str = "gencov"
    model: Union[ModelKind, str] = ModelKind.DCCA
    delta: float = FIT_DEFAULTS["delta"]
    num_points: Optional[int] = None
    max_sweeps: int = FIT_DEFAULTS["max_sweeps"]
    tol: float = FIT_DEFAULTS["tol"]
    seed: int = 0
    whitening: str = FIT_DEFAULTS["whitening"]
    approx_delta: Optional[float] = None
    target_workers: int = FIT_DEFAULTS["target_workers"]
    min_effective_samples: float = FIT_DEFAULTS["min_effective_samples"]
    spectral_candidates: int = FIT_DEFAULTS["spectral_candidates"]

    def __post_init__(self):
        self.model = ModelKind.parse(self.model)
        self.validate()

    def validate(self) -> None:
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError(f"K must be a positive integer, got {self.K}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method '{self.method}', expected one of {METHODS}")
        if self.whitening not in WHITENING_METHODS:
            raise ConfigError(f"unknown whitening '{self.whitening}', expected one of {WHITENING_METHODS}")
        if not self.delta > 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if self.num_points is not None and self.num_points < 2:
            raise ConfigError(f"num_points must be at least 2, got {self.num_points}")
        if self.max_sweeps < 1 or self.tol < 0:
            raise ConfigError("max_sweeps must be >= 1 and tol >= 0")
        if self.approx_delta is not None and not self.approx_delta > 0:
            raise ConfigError(f"approx_delta must be positive, got {self.approx_delta}")
        if self.spectral_candidates < 1:
            raise ConfigError(f"spectral_candidates must be at least 1, got {self.spectral_candidates}")
        if self.method == "cumulant" and self.model is not ModelKind.DCCA:
            raise ConfigError(f"the cumulant method needs two count views (DCCA), got {self.model.value}")

    def validate_for(self, X1: ViewMatrix, X2: ViewMatrix) -> None:
        check_aligned(X1, X2, min_samples=3 if self.method == "cumulant" else 2)
        if self.K > min(X1.M, X2.M):
            raise ConfigError(f"K={self.K} exceeds view dimensions ({X1.M}, {X2.M})")
        for index, (needs_counts, view) in enumerate(zip(self.model.discrete_views, (X1, X2)), start=1):
            if needs_counts and not view.discrete:
                raise ConfigError(f"{self.model.value} expects counts in view {index}, got continuous data")
        for index, view in enumerate((X1, X2), start=1):
            view_scale(view, self.delta, index)

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record["model"] = self.model.value
        return record


@dataclass
class Loadings:
    D1: np.ndarray
    D2: np.ndarray

    @property
    def K(self) -> int:
        return self.D1.shape[1]

    def stacked(self) -> np.ndarray:
        return np.vstack([self.D1, self.D2])


@dataclass
class FitDiagnostics:
    method: str
    model: str
    K: int
    N: int = 0
    sweeps: int = 0
    final_off: float = 0.0
    converged: bool = True
    off_trace: List[float] = field(default_factory=list)
    normality_trace: List[float] = field(default_factory=list)
    condition_q: float = 1.0
    condition_whitening: float = 1.0
    whitening_singular_values: List[float] = field(default_factory=list)
    whitening_residual: float = 0.0
    num_targets: int = 0
    dropped_points: List[str] = field(default_factory=list)
    min_separation: float = float("inf")
    flags: List[str] = field(default_factory=list)
    runtime_seconds: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class FitResult:
    loadings: Loadings
    diagnostics: FitDiagnostics
    diagonalizer: Diagonalizer
    whitening: WhiteningPair


# Processing points

def view_scale(X: ViewMatrix, delta: float, index: int = 1) -> float:
    """δ_j = delta · N · M_j / Σ|X_j|"""
    total = X.abs_sum()
    if total == 0:
        raise ScaleError(f"view {index} has only zero entries; processing point scale undefined")
    return delta * X.N * X.M / total


def canonical_points(W: WhiteningPair, delta1: float, delta2: float) -> List[ProcessingPoint]:
    """t = 0 followed by the whitened directions δ1 W1ᵀe_p and δ2 W2ᵀe_p"""
    M1, M2 = W.W1.shape[1], W.W2.shape[1]
    points = [ProcessingPoint.zero(M1, M2)]
    points += [ProcessingPoint(delta1 * W.W1[p], np.zeros(M2), f"view1:e{p + 1}") for p in range(W.K)]
    points += [ProcessingPoint(np.zeros(M1), delta2 * W.W2[p], f"view2:e{p + 1}") for p in range(W.K)]
    return points


def random_point(W: WhiteningPair, delta1: float, delta2: float, rng: np.random.Generator,
                 label: str = "random") -> ProcessingPoint:
    """t = [δ1 W1ᵀu; δ2 W2ᵀu] with u uniform on [0, 1]^K, unit norm"""
    u = rng.uniform(size=W.K)
    u /= np.linalg.norm(u)
    return ProcessingPoint(delta1 * (W.W1.T @ u), delta2 * (W.W2.T @ u), label)


def build_processing_points(W: WhiteningPair, X1: ViewMatrix, X2: ViewMatrix, delta: float,
                            num_points: Optional[int] = None,
                            rng: Optional[np.random.Generator] = None) -> List[ProcessingPoint]:
    if not delta > 0:
        raise ConfigError(f"delta must be positive, got {delta}")
    delta1 = view_scale(X1, delta, 1)
    delta2 = view_scale(X2, delta, 2)
    points = canonical_points(W, delta1, delta2)
    if num_points is None or num_points == len(points):
        return points
    if num_points < len(points):
        return points[:max(num_points, 2)]
    rng = np.random.default_rng(rng)
    extra = num_points - len(points)
    return points + [random_point(W, delta1, delta2, rng, f"random{i + 1}") for i in range(extra)]


# Target sets

def _deflation(W: WhiteningPair, point: ProcessingPoint, model: ModelKind) -> Tuple[np.ndarray, np.ndarray]:
    discrete1, discrete2 = model.discrete_views
    L1 = W.W1 * np.exp(-point.t1) if discrete1 else W.W1
    L2 = W.W2 * np.exp(-point.t2) if discrete2 else W.W2
    return L1, L2


def build_targets_gencov(X1: ViewMatrix, X2: ViewMatrix, W: WhiteningPair,
                         points: Sequence[ProcessingPoint], model: ModelKind,
                         min_effective_samples: Optional[float] = None,
                         workers: int = 1) -> TargetSet:
    """Whitened, exponentially deflated generalized cross-covariances, one per point"""
    model = ModelKind.parse(model)
    min_effective = FIT_DEFAULTS["min_effective_samples"] if min_effective_samples is None else min_effective_samples

    def target(point: ProcessingPoint) -> Optional[np.ndarray]:
        if point.is_zero:
            return whitened_s12(X1, X2, W.W1, W.W2)
        L1, L2 = _deflation(W, point, model)
        try:
            return whitened_cross_covariance(X1, X2, L1, L2, point, min_effective)
        except DegenerateWeightsError as e:
            logger.warning("dropping processing point %s: %s", point.label, e.message)
            return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            matrices = list(pool.map(target, points))
    else:
        matrices = [target(point) for point in points]

    kept = [(point.label, matrix) for point, matrix in zip(points, matrices) if matrix is not None]
    if len(kept) < 2:
        raise InsufficientTargetsError(f"only {len(kept)} of {len(points)} targets survived")
    labels, survivors = zip(*kept)
    return TargetSet.from_matrices(survivors, labels)


def build_targets_cumulant(X1: ViewMatrix, X2: ViewMatrix, W: WhiteningPair,
                           approx_delta: Optional[float] = None) -> TargetSet:
    """W1 Ŝ12 W2ᵀ followed by the 2K whitened T-cumulant projections on e_p"""
    matrices = [whitened_s12(X1, X2, W.W1, W.W2)]
    labels = ["t0"]
    for j in (1, 2):
        for p in range(W.K):
            u = np.zeros(W.K)
            u[p] = 1.0
            if approx_delta is None:
                matrices.append(whitened_t_projection(X1, X2, W, u, j))
            else:
                matrices.append(gencov_t_approx(X1, X2, W, u, j, approx_delta))
            labels.append(f"T{j}:e{p + 1}")
    return TargetSet.from_matrices(matrices, labels)


# Recovery

def nonnegative_columns(D: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Flip columns whose negative mass dominates, then truncate at zero"""
    positive = np.sum(np.clip(D, 0, None) ** 2, axis=0)
    negative = np.sum(np.clip(D, None, 0) ** 2, axis=0)
    signs = np.where(negative > positive, -1.0, 1.0)
    return np.clip(D * signs, 0, None), signs


def recover_loadings(W: WhiteningPair, Q: Union[Diagonalizer, np.ndarray], model: ModelKind) -> Loadings:
    """
    D1 = W1† V and D2 = W2† V⁻ᵀ, then per-view post-processing and ℓ1 normalization.

    A sign flip chosen on a count view is applied to the same column of a
    continuous partner view, since both share the column's scale.
    """
    model = ModelKind.parse(model)
    V = Q.Q if isinstance(Q, Diagonalizer) else np.asarray(Q, dtype=float)
    cond = condition_number(V)
    if not np.isfinite(cond) or cond > MAX_RECOVERY_CONDITION:
        raise RecoveryError(f"diagonalizer is singular to tolerance (condition number {cond:.3e})")

    D1 = pseudo_inverse(W.W1) @ V
    D2 = pseudo_inverse(W.W2) @ np.linalg.inv(V).T

    discrete1, discrete2 = model.discrete_views
    if discrete1:
        D1, signs1 = nonnegative_columns(D1)
        if not discrete2:
            D2 = D2 * signs1
    if discrete2:
        D2, signs2 = nonnegative_columns(D2)
        if not discrete1:
            D1 = D1 * signs2

    for name, D in (("D1", D1), ("D2", D2)):
        empty = np.flatnonzero(np.abs(D).sum(axis=0) == 0)
        if empty.size:
            logger.warning("%s columns %s vanish after truncation", name, (empty + 1).tolist())
    return Loadings(normalize_columns(D1), normalize_columns(D2))


def spectrum_separation(targets: TargetSet, Q: np.ndarray) -> float:
    """
    Smallest relative distance between two columns of the joint eigenvalue
    table; zero means two sources cannot be told apart.
    """
    if targets.K < 2:
        return float("inf")
    try:
        table = targets.similarity(Q).diagonals()
    except np.linalg.LinAlgError:
        return 0.0
    norms = np.linalg.norm(table, axis=0)
    best = float("inf")
    for k in range(targets.K - 1):
        for l in range(k + 1, targets.K):
            scale = max(norms[k], norms[l], np.finfo(float).tiny)
            best = min(best, float(np.linalg.norm(table[:, k] - table[:, l]) / scale))
    return best


def eigen_separation(B: np.ndarray) -> float:
    """Smallest gap between the sorted real parts of the eigenvalues of B"""
    values, _ = eig_nonsymmetric(B)
    if values.size < 2:
        return float("inf")
    return float(np.min(np.diff(np.sort(np.real(values)))))


def select_spectral_target(targets: TargetSet) -> TargetSet:
    """
    Keep t = 0 and the single candidate target whose eigenvalues are best
    separated. Conjugate pairs count as a zero gap.
    """
    candidates = [i for i, label in enumerate(targets.labels) if label != "t0"]
    if not candidates:
        raise InsufficientTargetsError("the spectral method needs a target with t != 0")
    gaps = [eigen_separation(targets.matrices[i]) for i in candidates]
    best = candidates[int(np.argmax(gaps))]
    logger.debug("spectral target %s chosen from %d candidates (gap %.3e)",
                 targets.labels[best], len(candidates), max(gaps))
    keep = [0, best] if targets.labels[0] == "t0" else [best]
    return TargetSet(targets.matrices[keep], [targets.labels[i] for i in keep])


class MomentMatchingEstimator:
    """Loading estimator for one FitConfig; deterministic given the seed"""

    def __init__(self, config: FitConfig):
        self.config = config
        self.rng = np.random.default_rng(config.seed)

    def fit(self, X1: ViewMatrix, X2: ViewMatrix) -> FitResult:
        """Estimate loadings from two sample-aligned views"""
        config = self.config
        start = time.perf_counter()
        with stage("validation"):
            config.validate_for(X1, X2)
        logger.info("fitting %s/%s with K=%d on N=%d samples", config.model.value, config.method, config.K, X1.N)

        with stage("s12"):
            s12 = s12_factored(X1, X2) if config.whitening == "randomized" else s12_hat(X1, X2)
        W = self._whiten(s12)
        residual = float(np.linalg.norm(whitened_s12(X1, X2, W.W1, W.W2) - np.eye(config.K)))

        points: List[ProcessingPoint] = []
        with stage("processing_points"):
            if config.method == "gencov":
                points = build_processing_points(W, X1, X2, config.delta, config.num_points, self.rng)
            elif config.method == "spectral":
                delta1 = view_scale(X1, config.delta, 1)
                delta2 = view_scale(X2, config.delta, 2)
                points = [ProcessingPoint.zero(X1.M, X2.M)]
                points += [random_point(W, delta1, delta2, self.rng, f"random{i + 1}")
                           for i in range(config.spectral_candidates)]

        with stage("targets"):
            if config.method == "cumulant":
                targets = build_targets_cumulant(X1, X2, W, config.approx_delta)
            else:
                targets = build_targets_gencov(X1, X2, W, points, config.model,
                                               config.min_effective_samples, config.target_workers)
        dropped = [point.label for point in points if point.label not in targets.labels]

        result = self._finish(W, targets, start)
        result.diagnostics.N = X1.N
        result.diagnostics.whitening_residual = residual
        result.diagnostics.dropped_points = dropped
        if dropped:
            result.diagnostics.flags.append("dropped_points")
        return result

    def fit_moments(self, s12: Union[np.ndarray, FactoredMatrix], deflated_targets: Sequence[np.ndarray],
                    whitening: Optional[WhiteningPair] = None,
                    labels: Optional[Sequence[str]] = None) -> FitResult:
        """
        Estimate loadings from precomputed moments: the cross-covariance and
        M1 x M2 deflated targets D1 diag(·) D2ᵀ (population or external).
        """
        start = time.perf_counter()
        W = whitening or self._whiten(s12)
        dense = s12.to_dense() if isinstance(s12, FactoredMatrix) else np.asarray(s12, dtype=float)
        matrices = [W.apply(dense)] + [W.apply(np.asarray(T, dtype=float)) for T in deflated_targets]
        names = ["t0"] + list(labels or [f"target{i + 1}" for i in range(len(deflated_targets))])
        with stage("targets"):
            if len(matrices) < 2:
                raise InsufficientTargetsError("need at least one target besides t = 0")
            targets = TargetSet.from_matrices(matrices, names)
        result = self._finish(W, targets, start)
        result.diagnostics.whitening_residual = float(np.linalg.norm(matrices[0] - np.eye(W.K)))
        return result

    def _whiten(self, s12) -> WhiteningPair:
        with stage("whitening"):
            return compute_whitening(s12, self.config.K, self.config.whitening, rng=self.rng)

    def _diagonalize(self, targets: TargetSet) -> Diagonalizer:
        with stage("diagonalization"):
            if self.config.method == "spectral":
                return spectral_diagonalizer(targets.matrices[-1])
            return nojd_jdtm(targets, max_sweeps=self.config.max_sweeps, tol=self.config.tol)

    def _finish(self, W: WhiteningPair, targets: TargetSet, start: float) -> FitResult:
        config = self.config
        if config.method == "spectral":
            with stage("targets"):
                targets = select_spectral_target(targets)
        diagonalizer = self._diagonalize(targets)
        with stage("recovery"):
            loadings = recover_loadings(W, diagonalizer, config.model)

        separation = spectrum_separation(targets, diagonalizer.Q)
        flags = []
        if not diagonalizer.converged:
            flags.append("not_converged")
        if separation < FIT_DEFAULTS["separation_tol"]:
            flags.append("degenerate_spectrum")
            logger.warning("joint eigenvalues of two sources coincide (separation %.3e); "
                           "loadings are not identifiable from these targets", separation)

        s = W.singular_values
        diagnostics = FitDiagnostics(
            method=config.method,
            model=config.model.value,
            K=config.K,
            sweeps=diagonalizer.sweeps_used,
            final_off=diagonalizer.final_off,
            converged=diagonalizer.converged,
            off_trace=list(diagonalizer.off_trace),
            normality_trace=list(diagonalizer.normality_trace),
            condition_q=diagonalizer.condition,
            condition_whitening=float(s[0] / s[-1]),
            whitening_singular_values=s.tolist(),
            num_targets=targets.P,
            min_separation=separation,
            flags=flags,
            runtime_seconds=time.perf_counter() - start,
        )
        logger.info("fit finished: %d targets, %d sweeps, off=%.3e", targets.P,
                    diagonalizer.sweeps_used, diagonalizer.final_off)
        return FitResult(loadings, diagnostics, diagonalizer, W)


def fit(X1: ViewMatrix, X2: ViewMatrix, config: FitConfig) -> FitResult:
    return MomentMatchingEstimator(config).fit(X1, X2)


def fit_moments(s12, deflated_targets: Sequence[np.ndarray], config: FitConfig,
                whitening: Optional[WhiteningPair] = None) -> FitResult:
    return MomentMatchingEstimator(config).fit_moments(s12, deflated_targets, whitening)
