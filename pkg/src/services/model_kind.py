from enum import Enum
from typing import Tuple

from utils.errors import ConfigError


class ModelKind(str, Enum):
    """CCA variant; fixes which views carry Poisson counts"""
    DCCA = "DCCA"
    NCCA = "NCCA"
    MCCA = "MCCA"  # view 1 continuous, view 2 counts

    @property
    def discrete_views(self) -> Tuple[bool, bool]:
        return {
            ModelKind.DCCA: (True, True),
            ModelKind.NCCA: (False, False),
            ModelKind.MCCA: (False, True),
        }[self]

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError as e:
            raise ConfigError(f"unknown model kind '{value}', expected one of DCCA, NCCA, MCCA") from e
