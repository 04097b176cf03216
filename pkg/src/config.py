"""
Application Configuration
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Results ledger (empty disables it)
DATABASE_URL = os.getenv("CCA_DATABASE_URL", "")
DATABASE_ECHO = os.getenv("CCA_DATABASE_ECHO", "False").lower() == "true"

# Application Settings
DEBUG = os.getenv("DEBUG", "False").lower() == "true"
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_TO_FILE = os.getenv("CCA_LOG_TO_FILE", "False").lower() == "true"

# Estimator Defaults
FIT_DEFAULTS = {
    "delta": float(os.getenv("CCA_DELTA", "0.1")),
    "max_sweeps": int(os.getenv("CCA_MAX_SWEEPS", "100")),
    "tol": float(os.getenv("CCA_TOL", "1e-10")),
    "y_max": 0.5,
    "max_condition": 1e8,
    "whitening": os.getenv("CCA_WHITENING", "exact"),
    "oversample": 10,
    "power_iterations": 1,
    "rank_tol_exact": 1e-10,
    "rank_tol_randomized": 1e-6,
    "min_effective_samples": 2.0,
    "separation_tol": 1e-6,
    "imaginary_mass_ratio": 0.01,
    "spectral_candidates": int(os.getenv("CCA_SPECTRAL_CANDIDATES", "16")),
    "target_workers": int(os.getenv("CCA_TARGET_WORKERS", "1")),
}

# Experiment Defaults
EXPERIMENT_DEFAULTS = {
    "n_grid": (500, 1000, 2000, 5000, 10000),
    "trials": 5,
    "methods": ("cumulant", "gencov"),
    "delta_grid": (0.1,),
    "seed": 0,
    "max_workers": int(os.getenv("CCA_MAX_WORKERS", "4")),
}

# Synthetic generator presets
GENERATOR_PRESETS = {
    "2d": {
        "kind": "discrete", "mode": "fixed2d", "M1": 2, "M2": 2, "K": 1, "K1": 2, "K2": 2,
        "c": 0.1, "c1": 0.1, "c2": 0.1, "Ls": 100.0, "Ln": 100.0,
    },
    "20d": {
        "kind": "discrete", "mode": "dirichlet", "M1": 20, "M2": 20, "K": 10, "K1": 20, "K2": 20,
        "c": 0.3, "c1": 0.1, "c2": 0.1, "Ls": 1000.0, "Ln": 1000.0,
    },
    "continuous-k1": {
        "kind": "continuous", "mode": "uniform", "M1": 20, "M2": 20, "K": 1, "K1": 1, "K2": 1,
        "c": 0.1, "c1": 0.1, "c2": 0.1, "Ls": 1000.0, "Ln": 1000.0,
    },
    "continuous-k10": {
        "kind": "continuous", "mode": "uniform", "M1": 20, "M2": 20, "K": 10, "K1": 10, "K2": 10,
        "c": 0.1, "c1": 0.1, "c2": 0.1, "Ls": 1000.0, "Ln": 1000.0,
    },
}

# File Storage
STORAGE_CONFIG = {
    "output_folder": Path(os.getenv("CCA_OUTPUT_DIR", str(Path.cwd() / "output"))),
    "log_folder": Path(os.getenv("CCA_LOG_DIR", str(Path.cwd() / "logs"))),
}

def ensure_storage(*names: str) -> None:
    """Create the named storage folders (all of them by default)"""
    for name in names or STORAGE_CONFIG.keys():
        STORAGE_CONFIG[name].mkdir(parents=True, exist_ok=True)

# Logging Configuration
LOGGING_CONFIG = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "default": {
            "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
        }
    },
    "handlers": {
        "file": {
            "class": "logging.FileHandler",
            "filename": str(STORAGE_CONFIG["log_folder"] / "cca.log"),
            "formatter": "default",
            "delay": True,
        },
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "default",
            "stream": "ext://sys.stderr",
        }
    },
    "root": {
        "level": LOG_LEVEL,
        "handlers": ["file", "console"] if LOG_TO_FILE else ["console"]
    }
}
