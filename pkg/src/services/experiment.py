"""
Synthetic experiment sweeps: fixed loadings, fresh latent draws per
(N, trial), every method and delta evaluated on the same sample.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from config import EXPERIMENT_DEFAULTS, FIT_DEFAULTS, GENERATOR_PRESETS
from services.evaluation import stacked_l1_error
from services.model_kind import ModelKind
from services.pipeline import METHODS, FitConfig, fit
from services.synthetic import (
    SyntheticInstance, dirichlet_loadings, gen_continuous_instance, gen_discrete_instance,
    sample_instance, uniform_loadings,
)
from utils.errors import CCAError, ConfigError

logger = logging.getLogger(__name__)

BASELINE = "baseline"
EXPERIMENT_METHODS = METHODS + (BASELINE,)
GENERATOR_KEYS = ("kind", "mode", "M1", "M2", "K", "K1", "K2", "c", "c1", "c2", "Ls", "Ln")
INSTANCE_STREAM = 0


@dataclass
class ExperimentConfig:
    model: Union[ModelKind, str] = ModelKind.DCCA
    generator: Dict[str, Any] = field(default_factory=lambda: dict(GENERATOR_PRESETS["2d"]))
    n_grid: Tuple[int, ...] = EXPERIMENT_DEFAULTS["n_grid"]
    trials: int = EXPERIMENT_DEFAULTS["trials"]
    methods: Tuple[str, ...] = EXPERIMENT_DEFAULTS["methods"]
    delta_grid: Tuple[float, ...] = EXPERIMENT_DEFAULTS["delta_grid"]
    seed: int = EXPERIMENT_DEFAULTS["seed"]
    out_dir: Optional[Path] = None
    max_workers: int = EXPERIMENT_DEFAULTS["max_workers"]
    whitening: str = FIT_DEFAULTS["whitening"]
    max_sweeps: int = FIT_DEFAULTS["max_sweeps"]
    tol: float = FIT_DEFAULTS["tol"]
    allow_sign: Optional[bool] = None

    def __post_init__(self):
        self.model = ModelKind.parse(self.model)
        self.n_grid = tuple(int(n) for n in self.n_grid)
        self.methods = tuple(self.methods)
        self.delta_grid = tuple(float(d) for d in self.delta_grid)
        if self.allow_sign is None:
            self.allow_sign = self.generator.get("kind") == "continuous"
        self.validate()

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "ExperimentConfig":
        if name not in GENERATOR_PRESETS:
            raise ConfigError(f"unknown preset '{name}', expected one of {sorted(GENERATOR_PRESETS)}")
        generator = dict(GENERATOR_PRESETS[name])
        for key in GENERATOR_KEYS:
            if key in overrides:
                generator[key] = overrides.pop(key)
        if "model" not in overrides and generator["kind"] == "continuous":
            overrides["model"] = ModelKind.NCCA
        return cls(generator=generator, **overrides)

    def validate(self) -> None:
        if not self.n_grid or not self.delta_grid or not self.methods:
            raise ConfigError("N grid, delta grid and method list must be non-empty")
        if self.trials < 1:
            raise ConfigError(f"trials must be at least 1, got {self.trials}")
        if min(self.n_grid) < 3:
            raise ConfigError(f"sample sizes must be at least 3, got {min(self.n_grid)}")
        if min(self.delta_grid) <= 0:
            raise ConfigError("delta values must be positive")
        if self.max_workers < 1:
            raise ConfigError(f"max_workers must be at least 1, got {self.max_workers}")
        unknown = [m for m in self.methods if m not in EXPERIMENT_METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}, expected a subset of {EXPERIMENT_METHODS}")
        missing = [key for key in GENERATOR_KEYS if key not in self.generator]
        if missing:
            raise ConfigError(f"generator parameters missing: {missing}")
        kind = self.generator["kind"]
        if kind not in ("discrete", "continuous"):
            raise ConfigError(f"generator kind must be discrete or continuous, got '{kind}'")
        if kind == "continuous" and self.model is not ModelKind.NCCA:
            raise ConfigError("the continuous generator produces NCCA data")
        if kind == "discrete" and self.model is not ModelKind.DCCA:
            raise ConfigError("the discrete generator produces DCCA data")
        if "cumulant" in self.methods and self.model is not ModelKind.DCCA:
            raise ConfigError("the cumulant method needs two count views (DCCA)")

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record["model"] = self.model.value
        record["out_dir"] = str(self.out_dir) if self.out_dir else None
        return record


@dataclass
class ResultRecord:
    method: str
    N: int
    trial: int
    delta: float
    err1: float
    runtime_seconds: float = 0.0
    sweeps: int = 0
    final_off: float = 0.0
    dropped_points: int = 0
    converged: bool = True
    status: str = "ok"
    message: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def sort_key(record: ResultRecord) -> Tuple[str, int, int, float]:
    """(method, N, trial, delta) with the delta-free baseline rows first"""
    delta = -math.inf if math.isnan(record.delta) else record.delta
    return record.method, record.N, record.trial, delta


def build_instance(generator: Dict[str, Any], seed: int) -> SyntheticInstance:
    """The fixed ground truth of a sweep"""
    rng = np.random.default_rng([seed, INSTANCE_STREAM])
    params = {key: generator[key] for key in ("M1", "M2", "K", "K1", "K2", "c", "c1", "c2", "Ls", "Ln")}
    if generator["kind"] == "continuous":
        return gen_continuous_instance(**params, seed=rng)
    return gen_discrete_instance(**params, mode=generator["mode"], seed=rng)


def trial_seed(seed: int, N: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, N, trial])


class ExperimentEngine:
    """Runs the (N, trial) grid concurrently and collects one record per (method, N, trial, delta)"""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.instance = build_instance(config.generator, config.seed)

    def run(self) -> List[ResultRecord]:
        config = self.config
        cells = [(N, trial) for N in config.n_grid for trial in range(1, config.trials + 1)]
        logger.info("experiment: %d cells x %d methods x %d deltas, %d workers",
                    len(cells), len(config.methods), len(config.delta_grid), config.max_workers)
        if config.max_workers > 1:
            with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
                batches = list(pool.map(lambda cell: self.run_cell(*cell), cells))
        else:
            batches = [self.run_cell(*cell) for cell in cells]
        records = [record for batch in batches for record in batch]
        return sorted(records, key=sort_key)

    def run_cell(self, N: int, trial: int) -> List[ResultRecord]:
        config = self.config
        streams = trial_seed(config.seed, N, trial).spawn(2)
        sample = sample_instance(self.instance, N, streams[0])
        fit_seed = int(streams[1].generate_state(1)[0])
        baseline_rng = np.random.default_rng(streams[1])

        records = []
        for method in config.methods:
            if method == BASELINE:
                records.append(self._baseline(N, trial, baseline_rng))
            elif method == "cumulant":
                # no delta dependence: one fit shared by every delta
                shared = self._fit(sample, method, N, trial, config.delta_grid[0], fit_seed)
                records.extend(replace(shared, delta=delta) for delta in config.delta_grid)
            else:
                records.extend(self._fit(sample, method, N, trial, delta, fit_seed)
                               for delta in config.delta_grid)
        logger.debug("cell N=%d trial=%d done", N, trial)
        return records

    def _fit(self, sample, method: str, N: int, trial: int, delta: float, seed: int) -> ResultRecord:
        config = self.config
        start = time.perf_counter()
        try:
            fit_config = FitConfig(
                K=self.instance.K, method=method, model=config.model, delta=delta,
                max_sweeps=config.max_sweeps, tol=config.tol, seed=seed, whitening=config.whitening,
            )
            result = fit(sample.X1, sample.X2, fit_config)
        except CCAError as e:
            logger.warning("%s failed at N=%d trial=%d delta=%g: %s", method, N, trial, delta, e)
            return ResultRecord(method, N, trial, delta, math.nan,
                                runtime_seconds=time.perf_counter() - start,
                                converged=False, status="failed", message=str(e))
        match = stacked_l1_error(result.loadings.D1, result.loadings.D2,
                                 self.instance.D1, self.instance.D2, config.allow_sign)
        diagnostics = result.diagnostics
        return ResultRecord(
            method=method, N=N, trial=trial, delta=delta, err1=match.error,
            runtime_seconds=diagnostics.runtime_seconds, sweeps=diagnostics.sweeps,
            final_off=diagnostics.final_off, dropped_points=len(diagnostics.dropped_points),
            converged=diagnostics.converged,
            status="ok" if not diagnostics.flags else "flagged",
            message=",".join(diagnostics.flags),
        )

    def _baseline(self, N: int, trial: int, rng: np.random.Generator) -> ResultRecord:
        inst = self.instance
        draw = dirichlet_loadings if inst.kind == "discrete" else uniform_loadings
        D1 = draw(inst.D1.shape[0], inst.K, rng)
        D2 = draw(inst.D2.shape[0], inst.K, rng)
        match = stacked_l1_error(D1, D2, inst.D1, inst.D2, self.config.allow_sign)
        return ResultRecord(BASELINE, N, trial, math.nan, match.error)


def run_experiment(config: ExperimentConfig) -> pd.DataFrame:
    records = ExperimentEngine(config).run()
    return pd.DataFrame([record.to_dict() for record in records])
