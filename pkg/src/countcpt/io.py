"""CSV series ingestion and test-report serialisation."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass

import numpy as np


class DataFormatError(ValueError):
    """Malformed or unsupported input data."""


@dataclass
class SeriesFile:
    path: str
    values: np.ndarray
    column: str
    n: int
    mean: float
    variance: float


def _pick_column(header, rows, column):
    """Resolve the value column: by name, by index, or the single column."""
    width = max(len(r) for r in rows)
    if column is None:
        if header and len(header) > 1:
            lowered = [h.strip().lower() for h in header]
            for name in ("y", "count", "value"):
                if name in lowered:
                    return lowered.index(name), header[lowered.index(name)]
            raise DataFormatError(
                f"multiple columns {header}; pick one with the column option"
            )
        return (width - 1 if width > 1 else 0), (header[-1] if header else "0")
    if isinstance(column, int) or (isinstance(column, str) and column.isdigit()):
        idx = int(column)
        if not 0 <= idx < width:
            raise DataFormatError(f"column index {idx} out of range (width {width})")
        return idx, str(idx)
    if header is None:
        raise DataFormatError(f"column name {column!r} given but the file has no header")
    lowered = [h.strip().lower() for h in header]
    if column.strip().lower() not in lowered:
        raise DataFormatError(f"column {column!r} not in header {header}")
    idx = lowered.index(column.strip().lower())
    return idx, header[idx]


def _looks_numeric(cell):
    try:
        float(cell)
        return True
    except ValueError:
        return False


def read_series(path, *, column=None, delimiter=",", family=None):
    """Read and validate a count series from a CSV file.

    Values must be nonnegative integers with no gaps; a ``family`` narrows
    the admissible support (the Bernoulli family requires {0, 1}).  Returns
    the parsed series along with its empirical mean and variance, the
    standard overdispersion diagnostic.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh, delimiter=delimiter) if r]
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataFormatError(f"{path}: empty file")

    header = None
    if any(cell.strip() and not _looks_numeric(cell) for cell in rows[0]):
        header = rows[0]
        rows = rows[1:]
    if not rows:
        raise DataFormatError(f"{path}: no data rows")

    idx, colname = _pick_column(header, rows, column)
    first_row = 2 if header else 1
    values = []
    for i, row in enumerate(rows):
        rownum = first_row + i
        if idx >= len(row) or not row[idx].strip():
            raise DataFormatError(f"{path}: missing value at row {rownum}")
        cell = row[idx].strip()
        try:
            v = float(cell)
        except ValueError:
            raise DataFormatError(
                f"{path}: non-numeric value {cell!r} at row {rownum}"
            ) from None
        if not math.isfinite(v) or v != int(v):
            raise DataFormatError(
                f"{path}: non-integer count {cell!r} at row {rownum}"
            )
        if v < 0:
            raise DataFormatError(f"{path}: negative count {cell!r} at row {rownum}")
        values.append(int(v))

    y = np.asarray(values, dtype=np.int64)
    if family is not None and not family.in_support(y):
        raise DataFormatError(
            f"{path}: values outside the {family.name} support"
        )
    return SeriesFile(
        path=str(path), values=y, column=colname, n=len(y),
        mean=float(np.mean(y)), variance=float(np.var(y, ddof=1)) if len(y) > 1 else 0.0,
    )


# -- report serialisation ----------------------------------------------------

SCHEMA_PATH = os.path.join(os.path.dirname(__file__), "report.schema.json")


def _fit_dict(fr):
    return {
        "theta": [float(v) for v in fr.theta],
        "loglik": float(fr.loglik),
        "grad_inf_norm": float(fr.grad_inf_norm),
        "iterations": int(fr.iterations),
        "boundary_active": list(fr.boundary_active),
        "converged": bool(fr.converged),
        "x_init": float(fr.x_init),
    }


def report_to_dict(report):
    """JSON-ready dict with a fixed field order.

    The breakpoint refits are included only for a rejection; a
    non-rejecting report keeps just the argmax record.
    """
    out = {
        "schema_version": 1,
        "model": report.model,
        "n": int(report.n),
        "alpha": float(report.alpha),
        "weight": report.weight,
        "u_n": int(report.u_n),
        "v_n": int(report.v_n),
        "statistic": float(report.statistic),
        "critical_value": float(report.critical_value),
        "reject": bool(report.reject),
        "t_hat": int(report.t_hat),
        "invalid_points": int(report.invalid_count),
        "reliability_warning": bool(report.reliability_warning),
        "curve": {
            "k": [int(k) for k in report.ks],
            "value": [None if not v else float(c)
                      for c, v in zip(report.curve, report.valid)],
        },
    }
    if report.reject:
        out["segments"] = {
            "before": _fit_dict(report.fit_left),
            "after": _fit_dict(report.fit_right),
        }
    return out


def emit_report(report, path, *, curve_path=None):
    """Write the report as JSON; optionally the curve as a plot-ready CSV.

    The curve CSV has columns ``k,C_nk,valid`` so the statistic path, the
    critical-value line and the breakpoint can be drawn directly.
    """
    payload = report_to_dict(report) if not isinstance(report, dict) else report
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    if curve_path is not None:
        ks = payload["curve"]["k"]
        vals = payload["curve"]["value"]
        with open(curve_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "C_nk", "valid"])
            for k, val in zip(ks, vals):
                writer.writerow([k, "" if val is None else repr(val), int(val is not None)])


def read_report(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_series_csv(path, y, x_latent=None):
    """CSV with header ``t,y`` (plus ``x`` when latent means are given)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if x_latent is None:
            writer.writerow(["t", "y"])
            for t, v in enumerate(y, start=1):
                writer.writerow([t, int(v)])
        else:
            writer.writerow(["t", "y", "x"])
            for t, (v, x) in enumerate(zip(y, x_latent), start=1):
                writer.writerow([t, int(v), repr(float(x))])
