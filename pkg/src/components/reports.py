"""
Plottable summary tables built from experiment records and NOJD traces.
"""

from typing import Any, Dict, Iterable, List, Sequence, Union

import numpy as np
import pandas as pd

from utils.helpers import format_error

RESULT_COLUMNS = [
    "method", "N", "trial", "delta", "err1", "runtime_seconds", "sweeps",
    "final_off", "dropped_points", "converged", "status", "message",
]
SUMMARY_KEYS = ["method", "delta", "N"]


def records_frame(records: Iterable[Union[Dict[str, Any], Any]]) -> pd.DataFrame:
    """One row per record, sorted by (method, N, trial, delta)"""
    rows = [record if isinstance(record, dict) else record.to_dict() for record in records]
    frame = pd.DataFrame(rows, columns=RESULT_COLUMNS)
    if frame.empty:
        return frame
    return frame.sort_values(["method", "N", "trial", "delta"], na_position="first").reset_index(drop=True)


def summarize_results(frame: pd.DataFrame) -> pd.DataFrame:
    """Median err1 per (method, delta, N) with trial and failure counts"""
    if frame.empty:
        return pd.DataFrame(columns=SUMMARY_KEYS + ["median_err1", "mean_runtime_seconds", "trials", "failures"])
    frame = frame.assign(
        delta=frame["delta"].fillna(-1.0),
        failed=(frame["status"] == "failed").astype(int),
    )
    summary = (
        frame.groupby(SUMMARY_KEYS, sort=True)
        .agg(median_err1=("err1", "median"),
             mean_runtime_seconds=("runtime_seconds", "mean"),
             trials=("trial", "count"),
             failures=("failed", "sum"))
        .reset_index()
    )
    summary["delta"] = summary["delta"].replace(-1.0, np.nan)
    return summary


def median_curve(summary: pd.DataFrame, method: str, delta: float = None) -> pd.Series:
    """Median err1 indexed by N for one method (and delta, when the method uses one)"""
    rows = summary[summary["method"] == method]
    if delta is not None and rows["delta"].notna().any():
        rows = rows[np.isclose(rows["delta"], delta)]
    return rows.set_index("N")["median_err1"].sort_index()


def monotone_with_slack(values: Sequence[float], slack: float = 0.02, inversions: int = 1) -> bool:
    """
    True when the sequence is non-increasing, allowing up to `inversions`
    increases of at most `slack` each.
    """
    values = list(values)
    seen = 0
    for before, after in zip(values, values[1:]):
        if after <= before:
            continue
        if after - before > slack:
            return False
        seen += 1
    return seen <= inversions


def convergence_table(off_trace: Sequence[float], normality_trace: Sequence[float] = ()) -> pd.DataFrame:
    sweeps = np.arange(len(off_trace))
    normality = list(normality_trace) + [np.nan] * (len(off_trace) - len(normality_trace))
    return pd.DataFrame({"sweep": sweeps, "off": list(off_trace), "normality": normality[:len(off_trace)]})


def format_table(summary: pd.DataFrame) -> str:
    """Console rendering: one line per method/delta, one column per N"""
    if summary.empty:
        return "no results"
    table = summary.assign(delta=summary["delta"].fillna(0.0)).pivot_table(
        index=["method", "delta"], columns="N", values="median_err1", aggfunc="first")
    lines: List[str] = ["method/delta".ljust(20) + "".join(f"{int(N):>10}" for N in table.columns)]
    for (method, delta), row in table.iterrows():
        label = method if delta == 0.0 else f"{method}/{delta:g}"
        lines.append(label.ljust(20) + "".join(f"{format_error(value):>10}" for value in row.to_numpy()))
    return "\n".join(lines)
