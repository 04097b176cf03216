"""
Command-line application: synth, fit, experiment, ingest and eval.

Settings come from an optional key=value file (--config); flags given on the
command line override it, and both override the defaults in config.py.
"""

import argparse
import json
import logging
import logging.config
import sys
from typing import Any, Dict, List, Optional

from config import DEBUG, FIT_DEFAULTS, LOGGING_CONFIG, LOG_TO_FILE, STORAGE_CONFIG, ensure_storage
from commands import cmd_eval, cmd_experiment, cmd_fit, cmd_ingest, cmd_synth
from commands.ingest import describe_view
from services.experiment import ExperimentConfig
from services.pipeline import FitConfig
from utils.data_io import to_jsonable
from utils.errors import EXIT_OK, CCAError, ConfigError, exit_code_for
from utils.helpers import (
    load_settings_file, merge_settings, parse_bool, parse_float, parse_float_list, parse_int,
    parse_int_list, parse_positive, parse_str_list,
)

logger = logging.getLogger(__name__)


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors surface as configuration errors (exit code 1)"""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _common() -> argparse.ArgumentParser:
    parser = ArgumentParser(add_help=False)
    parser.add_argument("--config", help="key=value settings file; flags override it")
    parser.add_argument("--verbose", action="store_true", default=None, help="debug logging")
    return parser


def _fit_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", help="DCCA, NCCA or MCCA")
    parser.add_argument("--whitening", help="exact or randomized")
    parser.add_argument("--max-sweeps")
    parser.add_argument("--tol")
    parser.add_argument("--seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--allow-sign", help="match columns up to sign when scoring (true/false)")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = ArgumentParser(prog="cca", description="Moment-matching estimation for discrete, "
                                                    "non-Gaussian and mixed CCA models")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common], help="generate synthetic views and their ground truth")
    synth.add_argument("--preset", help="2d, 20d, continuous-k1 or continuous-k10")
    synth.add_argument("--N", help="samples per trial")
    synth.add_argument("--K", help="override the number of shared sources")
    synth.add_argument("--trials")
    synth.add_argument("--seed")
    synth.add_argument("--out")
    synth.add_argument("--format", help="dense-csv or docword")

    fit = sub.add_parser("fit", parents=[common], help="estimate loadings from two view files")
    fit.add_argument("view1")
    fit.add_argument("view2")
    fit.add_argument("--method", help="cumulant, gencov or spectral")
    fit.add_argument("--K")
    fit.add_argument("--delta")
    fit.add_argument("--num-points")
    fit.add_argument("--approx-delta", help="finite-difference step for cumulant targets")
    fit.add_argument("--target-workers")
    fit.add_argument("--spectral-candidates", help="random directions tried by the spectral method")
    fit.add_argument("--format")
    fit.add_argument("--continuous", action="store_true", default=None, help="read dense views as continuous data")
    fit.add_argument("--truth", help="instance.json to score the fit against")
    fit.add_argument("--trace", action="store_true", default=None, help="write the NOJD trace as CSV")
    _fit_flags(fit)

    experiment = sub.add_parser("experiment", parents=[common], help="run a synthetic sweep")
    experiment.add_argument("--preset")
    experiment.add_argument("--method", "--methods", dest="methods", help="comma-separated methods")
    experiment.add_argument("--N-grid", help="comma-separated sample sizes")
    experiment.add_argument("--K", help="override the number of shared sources")
    experiment.add_argument("--trials")
    experiment.add_argument("--delta", help="comma-separated delta grid")
    experiment.add_argument("--max-workers")
    experiment.add_argument("--db", help="SQLAlchemy URL of the results ledger")
    _fit_flags(experiment)

    ingest = sub.add_parser("ingest", parents=[common], help="parse one or two view files and describe them")
    ingest.add_argument("paths", nargs="+")
    ingest.add_argument("--format")
    ingest.add_argument("--continuous", action="store_true", default=None)

    evaluate = sub.add_parser("eval", parents=[common], help="score written loadings against an instance")
    evaluate.add_argument("loadings_dir")
    evaluate.add_argument("instance")
    evaluate.add_argument("--allow-sign")
    return parser


def _optional(settings: Dict[str, Any], key: str, parse, *args):
    value = settings.get(key)
    return None if value is None else parse(value, *args)


def _discrete(settings: Dict[str, Any]):
    continuous = _optional(settings, "continuous", parse_bool, "continuous")
    return (False, False) if continuous else (None, None)


def run_synth(settings: Dict[str, Any]) -> Dict[str, Any]:
    overrides = {}
    if settings.get("k") is not None:
        overrides["K"] = parse_positive(settings["k"], "K", parse_int)
    written = cmd_synth(
        out_dir=settings.get("out") or STORAGE_CONFIG["output_folder"],
        preset=settings.get("preset", "2d"),
        N=parse_positive(settings.get("n", 1000), "N", parse_int),
        trials=parse_positive(settings.get("trials", 1), "trials", parse_int),
        seed=parse_int(settings.get("seed", 0), "seed"),
        fmt=settings.get("format", "dense-csv"),
        overrides=overrides,
    )
    return {"files": [str(path) for path in written]}


def fit_config_from(settings: Dict[str, Any]) -> FitConfig:
    if settings.get("k") is None:
        raise ConfigError("fit needs the number of sources (--K)")
    return FitConfig(
        K=parse_positive(settings["k"], "K", parse_int),
        method=settings.get("method", "gencov"),
        model=settings.get("model", "DCCA"),
        delta=parse_positive(settings.get("delta", FIT_DEFAULTS["delta"]), "delta"),
        num_points=_optional(settings, "num_points", parse_int, "num_points"),
        max_sweeps=parse_int(settings.get("max_sweeps", FIT_DEFAULTS["max_sweeps"]), "max_sweeps"),
        tol=parse_float(settings.get("tol", FIT_DEFAULTS["tol"]), "tol"),
        seed=parse_int(settings.get("seed", 0), "seed"),
        whitening=settings.get("whitening", FIT_DEFAULTS["whitening"]),
        approx_delta=_optional(settings, "approx_delta", parse_positive, "approx_delta"),
        target_workers=parse_positive(settings.get("target_workers", FIT_DEFAULTS["target_workers"]),
                                      "target_workers", parse_int),
        spectral_candidates=parse_positive(settings.get("spectral_candidates", FIT_DEFAULTS["spectral_candidates"]),
                                           "spectral_candidates", parse_int),
    )


def run_fit(settings: Dict[str, Any]) -> Dict[str, Any]:
    config = fit_config_from(settings)
    out_dir = settings.get("out") or STORAGE_CONFIG["output_folder"]
    result = cmd_fit(
        settings["view1"], settings["view2"], config, out_dir,
        fmt=settings.get("format"),
        discrete=_discrete(settings),
        truth=settings.get("truth"),
        allow_sign=_optional(settings, "allow_sign", parse_bool, "allow_sign"),
        trace=bool(_optional(settings, "trace", parse_bool, "trace")),
    )
    diagnostics = result.diagnostics
    return {"out": str(out_dir), "sweeps": diagnostics.sweeps, "final_off": diagnostics.final_off,
            "converged": diagnostics.converged, "flags": diagnostics.flags}


def experiment_config_from(settings: Dict[str, Any]) -> ExperimentConfig:
    overrides: Dict[str, Any] = {}
    methods = settings.get("methods", settings.get("method"))
    parsers = {
        "model": lambda value: value,
        "n_grid": lambda value: parse_int_list(value, "N grid"),
        "trials": lambda value: parse_positive(value, "trials", parse_int),
        "seed": lambda value: parse_int(value, "seed"),
        "max_workers": lambda value: parse_positive(value, "max_workers", parse_int),
        "whitening": lambda value: value,
        "max_sweeps": lambda value: parse_int(value, "max_sweeps"),
        "tol": lambda value: parse_float(value, "tol"),
        "allow_sign": lambda value: parse_bool(value, "allow_sign"),
    }
    for key, parse in parsers.items():
        if settings.get(key) is not None:
            overrides[key] = parse(settings[key])
    if settings.get("k") is not None:
        overrides["K"] = parse_positive(settings["k"], "K", parse_int)
    if methods is not None:
        overrides["methods"] = parse_str_list(methods)
    if settings.get("delta") is not None:
        overrides["delta_grid"] = parse_float_list(settings["delta"], "delta")
    if settings.get("out"):
        overrides["out_dir"] = settings["out"]
    return ExperimentConfig.from_preset(settings.get("preset", "2d"), **overrides)


def run_experiment(settings: Dict[str, Any]) -> Dict[str, Any]:
    config = experiment_config_from(settings)
    results, summary = cmd_experiment(config, db_url=settings.get("db"))
    return {"rows": len(results), "failures": int((results["status"] == "failed").sum()),
            "summary": summary.to_dict(orient="records")}


def run_ingest(settings: Dict[str, Any]) -> Dict[str, Any]:
    paths: List[str] = list(settings["paths"])
    if len(paths) > 2:
        raise ConfigError(f"ingest takes one or two files, got {len(paths)}")
    views = cmd_ingest(paths[0], paths[1] if len(paths) == 2 else None,
                       settings.get("format"), _discrete(settings))
    views = views if isinstance(views, tuple) else (views,)
    return {path: describe_view(view) for path, view in zip(paths, views)}


def run_eval(settings: Dict[str, Any]) -> Dict[str, Any]:
    return cmd_eval(settings["loadings_dir"], settings["instance"],
                    _optional(settings, "allow_sign", parse_bool, "allow_sign"))


COMMANDS = {
    "synth": run_synth,
    "fit": run_fit,
    "experiment": run_experiment,
    "ingest": run_ingest,
    "eval": run_eval,
}


def setup_logging(verbose: bool = False) -> None:
    if LOG_TO_FILE:
        ensure_storage("log_folder")
    logging.config.dictConfig(LOGGING_CONFIG)
    if verbose or DEBUG:
        logging.getLogger().setLevel(logging.DEBUG)


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns the process exit code"""
    try:
        args = build_parser().parse_args(argv)
        flags = vars(args)
        settings = merge_settings(load_settings_file(flags.pop("config")), flags)
        setup_logging(bool(_optional(settings, "verbose", parse_bool, "verbose")))
        command = settings.pop("command")
        logger.debug("running %s with %s", command, settings)
        output = COMMANDS[command](settings)
    except (CCAError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)
    print(json.dumps(to_jsonable(output), indent=2, sort_keys=True))
    return EXIT_OK
