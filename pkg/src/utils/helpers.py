from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

from dotenv import dotenv_values

from utils.errors import ConfigError


def format_error(value: float) -> str:
    """Format an ℓ1 error for console tables."""
    if value != value:
        return "n/a"
    return f"{value:.4f}"


def validate_positive_number(value, name: str = "value"):
    """Check if the provided value is a positive number."""
    if not value > 0:
        raise ConfigError(f"{name} must be a positive number, got {value}")
    return True


def parse_positive(value, name: str, parse=None):
    """Parse with `parse` (a float by default) and require a positive result."""
    number = (parse or parse_float)(value, name)
    validate_positive_number(number, name)
    return number


def normalize_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def load_settings_file(path: Optional[str]) -> Dict[str, str]:
    """Read a flat key=value settings file."""
    if not path:
        return {}
    if not Path(path).is_file():
        raise ConfigError(f"settings file not found: {path}")
    return {normalize_key(key): value for key, value in dotenv_values(path).items() if value is not None}


def merge_settings(file_values: Mapping[str, Any], flag_values: Mapping[str, Any]) -> Dict[str, Any]:
    """Flags given on the command line override file values."""
    merged = {normalize_key(key): value for key, value in file_values.items()}
    for key, value in flag_values.items():
        if value is not None:
            merged[normalize_key(key)] = value
    return merged


def parse_int(value, name: str) -> int:
    try:
        number = float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name} must be an integer, got '{value}'") from e
    if number != int(number):
        raise ConfigError(f"{name} must be an integer, got '{value}'")
    return int(number)


def parse_float(value, name: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name} must be a number, got '{value}'") from e


def parse_bool(value, name: str) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("true", "1", "yes"):
        return True
    if text in ("false", "0", "no"):
        return False
    raise ConfigError(f"{name} must be true or false, got '{value}'")


def _split(value) -> Sequence:
    if isinstance(value, (list, tuple)):
        return value
    return [item for item in str(value).replace(" ", "").split(",") if item]


def parse_int_list(value, name: str) -> Tuple[int, ...]:
    return tuple(parse_int(item, name) for item in _split(value))


def parse_float_list(value, name: str) -> Tuple[float, ...]:
    return tuple(parse_float(item, name) for item in _split(value))


def parse_str_list(value) -> Tuple[str, ...]:
    return tuple(str(item).strip().lower() for item in _split(value))
