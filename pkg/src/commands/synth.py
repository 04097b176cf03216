import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from config import GENERATOR_PRESETS
from services.experiment import build_instance, trial_seed
from services.synthetic import SyntheticInstance, sample_instance
from utils.data_io import INSTANCE_FILE, read_json, write_dense_csv, write_docword, write_json
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

VIEW_FILES = {"dense-csv": ("view1.csv", "view2.csv"), "docword": ("view1.txt", "view2.txt")}


def generator_params(preset: str, overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    if preset not in GENERATOR_PRESETS:
        raise ConfigError(f"unknown preset '{preset}', expected one of {sorted(GENERATOR_PRESETS)}")
    params = dict(GENERATOR_PRESETS[preset])
    params.update({key: value for key, value in (overrides or {}).items() if value is not None})
    return params


def cmd_synth(out_dir: Union[str, Path], preset: str = "2d", N: int = 1000, trials: int = 1,
              seed: int = 0, fmt: str = "dense-csv",
              overrides: Optional[Dict[str, Any]] = None) -> List[Path]:
    """
    Write instance.json and one trial<i>/ folder of views per trial.

    Samples use the same seed streams as the experiment engine, so a
    synthesized trial is the panel an experiment with that seed fits.
    """
    if trials < 1:
        raise ConfigError(f"trials must be at least 1, got {trials}")
    if N < 1:
        raise ConfigError(f"N must be at least 1, got {N}")
    if fmt not in VIEW_FILES:
        raise ConfigError(f"unknown data format '{fmt}', expected one of {sorted(VIEW_FILES)}")
    params = generator_params(preset, overrides)
    if fmt == "docword" and params["kind"] != "discrete":
        raise ConfigError("docword output needs count data (a discrete generator)")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    instance = build_instance(params, seed)
    written = [write_json(out_dir / INSTANCE_FILE, {**instance.to_dict(), "seed": seed, "preset": preset})]

    for trial in range(1, trials + 1):
        sample = sample_instance(instance, N, trial_seed(seed, N, trial).spawn(2)[0])
        trial_dir = out_dir / f"trial{trial}"
        trial_dir.mkdir(exist_ok=True)
        writer = write_docword if fmt == "docword" else write_dense_csv
        for name, view in zip(VIEW_FILES[fmt], (sample.X1, sample.X2)):
            written.append(writer(trial_dir / name, view.to_dense()))
    logger.info("synthesized %d trial(s) of N=%d from preset '%s' into %s", trials, N, preset, out_dir)
    return written


def read_instance(path: Union[str, Path]) -> SyntheticInstance:
    record = read_json(path)
    record.pop("seed", None)
    record.pop("preset", None)
    return SyntheticInstance.from_dict(record)
