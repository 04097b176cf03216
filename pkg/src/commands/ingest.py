import logging
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

from services.moments import ViewMatrix
from utils.data_io import FORMATS, read_dense_csv, read_docword
from utils.errors import ConfigError, DimensionError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def detect_format(path: PathLike) -> str:
    return "dense-csv" if Path(path).suffix.lower() == ".csv" else "docword"


def read_view(path: PathLike, fmt: Optional[str] = None, discrete: Optional[bool] = None,
              M: Optional[int] = None, N: Optional[int] = None) -> ViewMatrix:
    """Load one view; docword files always give a sparse count view"""
    path = Path(path)
    fmt = fmt or detect_format(path)
    if fmt not in FORMATS:
        raise ConfigError(f"unknown data format '{fmt}', expected one of {FORMATS}")
    if fmt == "docword":
        if discrete is False:
            raise ConfigError(f"{path}: docword files hold counts and cannot be read as a continuous view")
        variables, samples, counts, shape = read_docword(path, M=M, N=N)
        view = ViewMatrix.from_counts(variables, samples, counts, shape)
    else:
        view = ViewMatrix.from_dense(read_dense_csv(path), discrete=discrete)
    logger.info("read %s: %d variables x %d samples (%s, %d nonzeros)", path, view.M, view.N,
                "counts" if view.discrete else "continuous", view.nnz)
    return view


def cmd_ingest(path1: PathLike, path2: Optional[PathLike] = None, fmt: Optional[str] = None,
               discrete: Tuple[Optional[bool], Optional[bool]] = (None, None)):
    """One view, or a sample-aligned pair when two paths are given"""
    X1 = read_view(path1, fmt, discrete[0])
    if path2 is None:
        return X1
    X2 = read_view(path2, fmt, discrete[1])
    if X1.N != X2.N:
        raise DimensionError(f"views disagree on the number of samples: {path1} has {X1.N}, {path2} has {X2.N}")
    return X1, X2


def describe_view(view: ViewMatrix) -> Dict[str, object]:
    return {
        "M": view.M,
        "N": view.N,
        "nnz": view.nnz,
        "discrete": view.discrete,
        "sparse": view.is_sparse,
    }
