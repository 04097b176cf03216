import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from commands.ingest import cmd_ingest
from commands.synth import read_instance
from components.reports import convergence_table
from services.evaluation import stacked_l1_error
from services.pipeline import FitConfig, FitResult, fit
from utils.data_io import write_loadings

logger = logging.getLogger(__name__)

TRACE_FILE = "trace.csv"


def fit_record(result: FitResult, config: FitConfig, err1: Optional[float] = None) -> Dict[str, Any]:
    """The ResultRecord of a single fit, with the configuration that produced it"""
    diagnostics = result.diagnostics
    return {
        "method": config.method,
        "N": diagnostics.N,
        "trial": 0,
        "delta": config.delta,
        "err1": err1,
        "runtime_seconds": diagnostics.runtime_seconds,
        "sweeps": diagnostics.sweeps,
        "final_off": diagnostics.final_off,
        "dropped_points": len(diagnostics.dropped_points),
        "converged": diagnostics.converged,
        "flags": diagnostics.flags,
        "config": config.to_dict(),
    }


def cmd_fit(view1: Union[str, Path], view2: Union[str, Path], config: FitConfig,
            out_dir: Union[str, Path], fmt: Optional[str] = None,
            discrete: Tuple[Optional[bool], Optional[bool]] = (None, None),
            truth: Optional[Union[str, Path]] = None, allow_sign: Optional[bool] = None,
            trace: bool = False) -> FitResult:
    """Fit loadings to two view files and write them with diagnostics and record"""
    X1, X2 = cmd_ingest(view1, view2, fmt, discrete)
    result = fit(X1, X2, config)

    err1 = None
    if truth is not None:
        instance = read_instance(truth)
        sign = instance.kind == "continuous" if allow_sign is None else allow_sign
        err1 = stacked_l1_error(result.loadings.D1, result.loadings.D2,
                                instance.D1, instance.D2, sign).error
        logger.info("err1 against %s: %.6f", truth, err1)

    out_dir = write_loadings(out_dir, result.loadings.D1, result.loadings.D2,
                             result.diagnostics.to_dict(), fit_record(result, config, err1))
    if trace:
        diagnostics = result.diagnostics
        convergence_table(diagnostics.off_trace, diagnostics.normality_trace).to_csv(
            out_dir / TRACE_FILE, index=False, float_format="%.17g")
    return result
