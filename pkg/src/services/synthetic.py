"""
Ground-truth generators for the discrete (Gamma-Poisson) and continuous
(sign-symmetrized gamma) multi-view models, and their population moments.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Union

import numpy as np

from services.model_kind import ModelKind
from services.moments import ProcessingPoint, ViewMatrix
from utils.errors import ConfigError, ScaleError

logger = logging.getLogger(__name__)

SeedLike = Optional[Union[int, np.random.Generator, np.random.SeedSequence]]

DIRICHLET_CONCENTRATION = 0.5
FIXED2D_LOADING = np.array([[0.5], [0.5]])
FIXED2D_NOISE = np.array([[0.9, 0.1], [0.1, 0.9]])


@dataclass(frozen=True)
class SourceLaw:
    """Independent latent sources; gamma rates are inverse scales"""
    kind: str
    shape: np.ndarray
    rate: np.ndarray

    @classmethod
    def gaussian(cls, variance: np.ndarray) -> "SourceLaw":
        variance = np.asarray(variance, dtype=float)
        return cls("gaussian", variance, np.ones_like(variance))

    @property
    def K(self) -> int:
        return len(self.shape)

    def variance(self) -> np.ndarray:
        return self.gen_covariance(np.zeros(self.K))

    def gen_covariance(self, h: np.ndarray) -> np.ndarray:
        """Diagonal of the generalized covariance (second CGF derivative) at h"""
        h = np.asarray(h, dtype=float)
        c, b = self.shape, self.rate
        if self.kind == "gaussian":
            return c.copy()
        if self.kind == "gamma":
            if np.any(h >= b):
                raise ScaleError("gamma generalized covariance needs h < rate")
            return c / (b - h) ** 2
        if self.kind == "symmetric_gamma":
            if np.any(np.abs(h) >= b):
                raise ScaleError("symmetric gamma generalized covariance needs |h| < rate")
            lo, hi = 1.0 - h / b, 1.0 + h / b
            mgf = 0.5 * (lo ** -c + hi ** -c)
            first = 0.5 * (c / b) * (lo ** (-c - 1) - hi ** (-c - 1))
            second = 0.5 * (c * (c + 1) / b ** 2) * (lo ** (-c - 2) + hi ** (-c - 2))
            return second / mgf - (first / mgf) ** 2
        raise ConfigError(f"unknown source law '{self.kind}'")

    def sample(self, rng: np.random.Generator, N: int) -> np.ndarray:
        size = (self.K, N)
        if self.kind == "gaussian":
            return rng.standard_normal(size) * np.sqrt(self.shape)[:, None]
        magnitudes = rng.gamma(self.shape[:, None], 1.0 / self.rate[:, None], size=size)
        if self.kind == "gamma":
            return magnitudes
        signs = 2.0 * rng.integers(0, 2, size=size) - 1.0
        return signs * magnitudes


@dataclass(frozen=True)
class SyntheticInstance:
    """Loadings, noise factors and gamma parameters of one generator"""
    D1: np.ndarray
    D2: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    c: float
    c1: float
    c2: float
    b: float
    b1: float
    b2: float
    Ls: float
    Ln: float
    mode: str

    kind = "base"
    law_kind = "gamma"

    @property
    def K(self) -> int:
        return self.D1.shape[1]

    @property
    def K1(self) -> int:
        return self.F1.shape[1]

    @property
    def K2(self) -> int:
        return self.F2.shape[1]

    def source_law(self) -> SourceLaw:
        return SourceLaw(self.law_kind, np.full(self.K, self.c), np.full(self.K, self.b))

    def noise_laws(self):
        return (SourceLaw(self.law_kind, np.full(self.K1, self.c1), np.full(self.K1, self.b1)),
                SourceLaw(self.law_kind, np.full(self.K2, self.c2), np.full(self.K2, self.b2)))

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        for key in ("D1", "D2", "F1", "F2"):
            record[key] = record[key].tolist()
        record["kind"] = self.kind
        return record

    @staticmethod
    def from_dict(record: Dict[str, Any]) -> "SyntheticInstance":
        record = dict(record)
        kind = record.pop("kind", "discrete")
        cls = {"discrete": DiscreteInstance, "continuous": ContinuousInstance}.get(kind)
        if cls is None:
            raise ConfigError(f"unknown instance kind '{kind}'")
        for key in ("D1", "D2", "F1", "F2"):
            record[key] = np.asarray(record[key], dtype=float)
        return cls(**record)


class DiscreteInstance(SyntheticInstance):
    kind = "discrete"
    law_kind = "gamma"


class ContinuousInstance(SyntheticInstance):
    kind = "continuous"
    law_kind = "symmetric_gamma"


@dataclass
class SyntheticSample:
    X1: ViewMatrix
    X2: ViewMatrix
    alpha: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray


def _validate_params(M1, M2, K, K1, K2, c, c1, c2, Ls, Ln) -> None:
    for name, value in dict(M1=M1, M2=M2, K=K, K1=K1, K2=K2).items():
        if int(value) != value or value < 1:
            raise ConfigError(f"{name} must be a positive integer, got {value}")
    for name, value in dict(c=c, c1=c1, c2=c2, Ls=Ls, Ln=Ln).items():
        if not value > 0:
            raise ConfigError(f"{name} must be positive, got {value}")


def _rates(K, K1, K2, c, c1, c2, Ls, Ln):
    return K * c / Ls, K1 * c1 / Ln, K2 * c2 / Ln


def dirichlet_loadings(M: int, K: int, rng: SeedLike = None,
                       concentration: float = DIRICHLET_CONCENTRATION) -> np.ndarray:
    """M x K matrix with Dirichlet columns"""
    rng = np.random.default_rng(rng)
    return rng.dirichlet(np.full(M, concentration), size=K).T


def uniform_loadings(M: int, K: int, rng: SeedLike = None) -> np.ndarray:
    """Uniform[-1, 1] entries with ℓ1-normalized columns"""
    rng = np.random.default_rng(rng)
    D = rng.uniform(-1.0, 1.0, size=(M, K))
    return D / np.abs(D).sum(axis=0)


def gen_discrete_instance(M1: int, M2: int, K: int, K1: int, K2: int,
                          c: float, c1: float, c2: float, Ls: float, Ln: float,
                          mode: str = "dirichlet", seed: SeedLike = None) -> DiscreteInstance:
    _validate_params(M1, M2, K, K1, K2, c, c1, c2, Ls, Ln)
    b, b1, b2 = _rates(K, K1, K2, c, c1, c2, Ls, Ln)

    if mode == "fixed2d":
        if not (M1 == M2 == K1 == K2 == 2 and K == 1):
            raise ConfigError("fixed2d requires M1 = M2 = K1 = K2 = 2 and K = 1")
        D1, D2 = FIXED2D_LOADING.copy(), FIXED2D_LOADING.copy()
        F1, F2 = FIXED2D_NOISE.copy(), FIXED2D_NOISE.copy()
    elif mode == "dirichlet":
        rng = np.random.default_rng(seed)
        D1 = dirichlet_loadings(M1, K, rng)
        D2 = dirichlet_loadings(M2, K, rng)
        F1 = dirichlet_loadings(M1, K1, rng)
        F2 = dirichlet_loadings(M2, K2, rng)
    else:
        raise ConfigError(f"unknown discrete generator mode '{mode}'")

    return DiscreteInstance(D1, D2, F1, F2, float(c), float(c1), float(c2),
                            b, b1, b2, float(Ls), float(Ln), mode)


def gen_continuous_instance(M1: int, M2: int, K: int, K1: int, K2: int,
                            c: float, c1: float, c2: float, Ls: float, Ln: float,
                            seed: SeedLike = None) -> ContinuousInstance:
    _validate_params(M1, M2, K, K1, K2, c, c1, c2, Ls, Ln)
    b, b1, b2 = _rates(K, K1, K2, c, c1, c2, Ls, Ln)
    rng = np.random.default_rng(seed)
    D1 = uniform_loadings(M1, K, rng)
    D2 = uniform_loadings(M2, K, rng)
    F1 = uniform_loadings(M1, K1, rng)
    F2 = uniform_loadings(M2, K2, rng)
    return ContinuousInstance(D1, D2, F1, F2, float(c), float(c1), float(c2),
                              b, b1, b2, float(Ls), float(Ln), "uniform")


def _draw_latents(inst: SyntheticInstance, N: int, rng: np.random.Generator):
    if N < 1:
        raise ConfigError(f"N must be at least 1, got {N}")
    noise1, noise2 = inst.noise_laws()
    alpha = inst.source_law().sample(rng, N)
    beta1 = noise1.sample(rng, N)
    beta2 = noise2.sample(rng, N)
    return alpha, beta1, beta2


def sample_discrete(inst: DiscreteInstance, N: int, seed: SeedLike = None) -> SyntheticSample:
    """x_j ~ Poisson(D_j α + F_j β_j) with gamma sources and noise"""
    rng = np.random.default_rng(seed)
    alpha, beta1, beta2 = _draw_latents(inst, N, rng)
    X1 = rng.poisson(inst.D1 @ alpha + inst.F1 @ beta1)
    X2 = rng.poisson(inst.D2 @ alpha + inst.F2 @ beta2)
    return SyntheticSample(ViewMatrix.from_dense(X1, discrete=True),
                           ViewMatrix.from_dense(X2, discrete=True),
                           alpha, beta1, beta2)


def sample_continuous(inst: ContinuousInstance, N: int, seed: SeedLike = None) -> SyntheticSample:
    """x_j = D_j α + F_j β_j with Rademacher-signed gamma sources and noise"""
    rng = np.random.default_rng(seed)
    alpha, beta1, beta2 = _draw_latents(inst, N, rng)
    X1 = inst.D1 @ alpha + inst.F1 @ beta1
    X2 = inst.D2 @ alpha + inst.F2 @ beta2
    return SyntheticSample(ViewMatrix.from_dense(X1, discrete=False),
                           ViewMatrix.from_dense(X2, discrete=False),
                           alpha, beta1, beta2)


def sample_instance(inst: SyntheticInstance, N: int, seed: SeedLike = None) -> SyntheticSample:
    if isinstance(inst, DiscreteInstance):
        return sample_discrete(inst, N, seed)
    return sample_continuous(inst, N, seed)


# Population moments

def _source_argument(D1: np.ndarray, D2: np.ndarray, t: ProcessingPoint, model: ModelKind) -> np.ndarray:
    discrete1, discrete2 = model.discrete_views
    shift1 = np.expm1(t.t1) if discrete1 else t.t1
    shift2 = np.expm1(t.t2) if discrete2 else t.t2
    return D1.T @ shift1 + D2.T @ shift2


def deflated_population_target(D1: np.ndarray, D2: np.ndarray, law: SourceLaw,
                               t: ProcessingPoint, model: ModelKind) -> np.ndarray:
    """D1 C_α(h(t)) D2ᵀ: the generalized cross-covariance with exponential factors removed"""
    model = ModelKind.parse(model)
    h = _source_argument(D1, D2, t, model)
    return (D1 * law.gen_covariance(h)) @ D2.T


def population_cross_covariance(inst: SyntheticInstance, t: ProcessingPoint,
                                model: ModelKind, law: Optional[SourceLaw] = None) -> np.ndarray:
    """Generalized S-covariance S12(t) of the generating model"""
    model = ModelKind.parse(model)
    law = law or inst.source_law()
    target = deflated_population_target(inst.D1, inst.D2, law, t, model)
    discrete1, discrete2 = model.discrete_views
    if discrete1:
        target = np.exp(t.t1)[:, None] * target
    if discrete2:
        target = target * np.exp(t.t2)[None, :]
    return target


def population_s12(inst: SyntheticInstance, law: Optional[SourceLaw] = None) -> np.ndarray:
    """cov(x1, x2) = D1 diag(var α) D2ᵀ"""
    law = law or inst.source_law()
    return (inst.D1 * law.variance()) @ inst.D2.T
