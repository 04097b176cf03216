"""
File formats: dense CSV views (first line "M,N", then one row per variable),
1-indexed docword triplets ("sample variable count"), loadings CSV files with
JSON sidecars, and instance parameter files.
"""

import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp

from utils.errors import DataFormatError, DimensionError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FORMATS = ("dense-csv", "docword")
LOADINGS_FILES = ("loadings_view1.csv", "loadings_view2.csv")
DIAGNOSTICS_FILE = "diagnostics.json"
RECORD_FILE = "record.json"
INSTANCE_FILE = "instance.json"


def write_dense_csv(path: PathLike, matrix: np.ndarray) -> Path:
    """Integer-valued matrices are written as integers, others with 17 significant digits"""
    path = Path(path)
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise DimensionError(f"dense CSV holds a 2-D matrix, got shape {matrix.shape}")
    frame = pd.DataFrame(matrix)
    integral = np.all(np.isfinite(matrix)) and np.all(matrix == np.round(matrix))
    with open(path, "w", newline="") as handle:
        handle.write(f"{matrix.shape[0]},{matrix.shape[1]}\n")
        if integral:
            frame.astype(np.int64).to_csv(handle, header=False, index=False, lineterminator="\n")
        else:
            frame.to_csv(handle, header=False, index=False, float_format="%.17g", lineterminator="\n")
    return path


def read_dense_csv(path: PathLike) -> np.ndarray:
    path = Path(path)
    with open(path) as handle:
        header = handle.readline().strip()
    if not header:
        raise DataFormatError("empty data file", str(path), 1)
    try:
        M, N = (int(value) for value in header.split(","))
    except ValueError as e:
        raise DataFormatError(f"header must be 'M,N', got '{header}'", str(path), 1) from e
    if M < 1 or N < 1:
        raise DataFormatError(f"header declares an empty matrix {M}x{N}", str(path), 1)
    try:
        frame = pd.read_csv(path, skiprows=1, header=None, dtype=float, float_precision="round_trip")
    except pd.errors.EmptyDataError as e:
        raise DataFormatError("no data rows after the header", str(path), 2) from e
    except ValueError as e:
        raise DataFormatError(f"non-numeric entry: {e}", str(path)) from e
    matrix = frame.to_numpy()
    if matrix.shape != (M, N):
        raise DataFormatError(f"header declares {M}x{N} but found {matrix.shape[0]}x{matrix.shape[1]}", str(path))
    if not np.all(np.isfinite(matrix)):
        rows = np.flatnonzero(~np.all(np.isfinite(matrix), axis=1))
        raise DataFormatError("missing or non-finite entry", str(path), int(rows[0]) + 2)
    return matrix


def _parse_int(token: str, path: Path, line: int, what: str) -> int:
    try:
        value = float(token)
    except ValueError as e:
        raise DataFormatError(f"{what} '{token}' is not a number", str(path), line) from e
    if value != math.floor(value):
        raise DataFormatError(f"{what} '{token}' is not an integer", str(path), line)
    return int(value)


def read_docword(path: PathLike, M: Optional[int] = None,
                 N: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray, Tuple[int, int]]:
    """
    Parse 1-indexed "sample variable count" triplets.

    An optional leading header of three single-integer lines (samples,
    variables, nonzeros) fixes the shape. Returns 0-indexed variable and sample
    indices, counts and the (M, N) shape.
    """
    path = Path(path)
    header = []
    variables, samples, counts = [], [], []
    with open(path) as handle:
        for number, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) == 1 and not counts and len(header) < 3:
                header.append(_parse_int(tokens[0], path, number, "header value"))
                continue
            if len(tokens) != 3:
                raise DataFormatError(f"expected 'sample variable count', got '{line}'", str(path), number)
            sample = _parse_int(tokens[0], path, number, "sample id")
            variable = _parse_int(tokens[1], path, number, "variable id")
            count = _parse_int(tokens[2], path, number, "count")
            if sample < 1 or variable < 1:
                raise DataFormatError("ids are 1-indexed and must be positive", str(path), number)
            if count < 0:
                raise DataFormatError(f"negative count {count}", str(path), number)
            if M is not None and variable > M:
                raise DataFormatError(f"variable id {variable} exceeds M={M}", str(path), number)
            samples.append(sample - 1)
            variables.append(variable - 1)
            counts.append(count)

    if header and len(header) != 3:
        raise DataFormatError("header must have three lines: samples, variables, nonzeros", str(path))
    if not counts:
        raise DataFormatError("empty data: no triplets found", str(path))
    if header:
        N = N if N is not None else header[0]
        M = M if M is not None else header[1]
    M = M if M is not None else max(variables) + 1
    N = N if N is not None else max(samples) + 1
    if max(variables) >= M or max(samples) >= N:
        raise DataFormatError(f"triplet ids exceed the declared shape {M}x{N}", str(path))
    return np.asarray(variables), np.asarray(samples), np.asarray(counts, dtype=float), (M, N)


def write_docword(path: PathLike, matrix) -> Path:
    """Write a count matrix (dense or sparse, M x N) as triplets behind the three-line shape header"""
    path = Path(path)
    coo = sp.coo_matrix(matrix)
    coo.eliminate_zeros()
    order = np.lexsort((coo.row, coo.col))
    with open(path, "w") as handle:
        handle.write(f"{coo.shape[1]}\n{coo.shape[0]}\n{coo.nnz}\n")
        for k in order:
            handle.write(f"{coo.col[k] + 1} {coo.row[k] + 1} {int(coo.data[k])}\n")
    return path


def to_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, Enum):
        return value.value
    return value


def write_json(path: PathLike, payload: Dict[str, Any]) -> Path:
    path = Path(path)
    with open(path, "w") as handle:
        json.dump(to_jsonable(payload), handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    try:
        with open(path) as handle:
            return json.load(handle)
    except json.JSONDecodeError as e:
        raise DataFormatError(f"invalid JSON: {e.msg}", str(path), e.lineno) from e


def write_loadings(out_dir: PathLike, D1: np.ndarray, D2: np.ndarray,
                   diagnostics: Optional[Dict[str, Any]] = None,
                   record: Optional[Dict[str, Any]] = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_dense_csv(out_dir / LOADINGS_FILES[0], D1)
    write_dense_csv(out_dir / LOADINGS_FILES[1], D2)
    if diagnostics is not None:
        write_json(out_dir / DIAGNOSTICS_FILE, diagnostics)
    if record is not None:
        write_json(out_dir / RECORD_FILE, record)
    return out_dir


def read_loadings(out_dir: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    out_dir = Path(out_dir)
    D1 = read_dense_csv(out_dir / LOADINGS_FILES[0])
    D2 = read_dense_csv(out_dir / LOADINGS_FILES[1])
    if D1.shape[1] != D2.shape[1]:
        raise DataFormatError(f"loadings disagree on K: {D1.shape[1]} vs {D2.shape[1]}", str(out_dir))
    return D1, D2
