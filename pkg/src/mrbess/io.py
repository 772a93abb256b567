"""CSV matrices, JSON reports and benchmark tables."""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class CsvFormatError(ValueError):
    pass


def read_csv_matrix(path, has_header: bool = False) -> np.ndarray:
    """Read a rectangular numeric CSV grid; the first row is skipped if ``has_header``."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if has_header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise CsvFormatError(
                    f"{path}: line {lineno} has {len(row)} fields, expected {width}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                col = next(j for j, c in enumerate(row, start=1) if not _is_float(c))
                raise CsvFormatError(
                    f"{path}: non-numeric cell {row[col - 1]!r} at line {lineno}, "
                    f"column {col}") from None
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    M = np.array(rows, dtype=float)
    log.info("read %s: %d x %d", path, *M.shape)
    return M


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def write_matrix_csv(path, M) -> None:
    """Scientific notation with 17 significant digits (exact float round trip)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in M:
            w.writerow([f"{v:.16e}" for v in row])


_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["command", "config", "fit", "tune_trace", "timing_s"],
    "properties": {
        "command": {"enum": ["fit", "tune", "simulate", "bench"]},
        "config": {"type": "object"},
        "fit": {
            "type": ["object", "null"],
            "required": ["active_set", "rank", "sparsity", "loss", "gic",
                         "iterations", "converged", "C_path"],
            "properties": {
                "active_set": {"type": "array",
                               "items": {"type": "integer", "minimum": 1}},
                "rank": {"type": "integer", "minimum": 1},
                "sparsity": {"type": "integer", "minimum": 1},
                "loss": _NUM,
                "gic": _NUM_OR_NULL,
                "iterations": {"type": "integer", "minimum": 1},
                "converged": {"type": "boolean"},
                "status": {"type": "string"},
                "C_path": {"type": ["string", "null"]},
            },
        },
        "tune_trace": {
            "type": ["object", "null"],
            "properties": {
                "method": {"enum": ["gic", "grid", "validation"]},
                "s_hat": {"type": "integer"},
                "r_hat": {"type": "integer"},
                "n_fits": {"type": "integer"},
                "cells": {"type": "array", "items": {"type": "object"}},
            },
        },
        "metrics": {
            "type": ["object", "null"],
            "required": ["er_c", "er_xc", "fpr", "fnr", "est_rank", "wall_time_s"],
            "properties": {
                "er_c": {"type": "number", "minimum": 0},
                "er_xc": {"type": "number", "minimum": 0},
                "fpr": {"type": "number", "minimum": 0, "maximum": 1},
                "fnr": {"type": "number", "minimum": 0, "maximum": 1},
                "est_rank": {"type": "integer", "minimum": 0},
                "wall_time_s": {"type": "number", "minimum": 0},
            },
        },
        "table": {"type": "array", "items": {"type": "object"}},
        "failed_replications": {"type": "integer", "minimum": 0},
        "timing_s": {"type": "number", "minimum": 0},
    },
}


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def fit_section(fit, C_path=None) -> dict:
    return {
        "active_set": [int(j) + 1 for j in fit.active_set],
        "rank": int(fit.rank),
        "sparsity": int(fit.sparsity),
        "loss": float(fit.loss),
        "gic": fit.gic,
        "iterations": int(fit.iterations),
        "converged": bool(fit.converged),
        "status": fit.status,
        "C_path": None if C_path is None else str(C_path),
    }


def tune_section(report) -> dict:
    cells = []
    for rec in report.records():
        d = dict(rec.__dict__)
        cells.append(d)
    return {"method": report.method, "s_hat": int(report.s_hat),
            "r_hat": int(report.r_hat), "n_fits": int(report.n_fits),
            "cells": cells}


def write_report(result: dict, format: str = "json", path=None) -> str:
    """Serialize a report dict. JSON goes to ``path`` (or is only returned).

    ``format="csv"`` expects ``result["C"]`` and writes just the matrix.
    """
    if format == "csv":
        if path is None:
            raise ValueError("csv output needs a path")
        write_matrix_csv(path, result["C"])
        return str(path)
    if format != "json":
        raise ValueError(f"unknown format {format!r}")
    body = {k: v for k, v in result.items() if k != "C"}
    text = json.dumps(_clean(body), indent=2, sort_keys=False)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def write_benchmark(table, path, format: str = "csv") -> None:
    rows = table.csv_rows()
    if format == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(table.CSV_COLUMNS),
                               lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: (repr(float(v)) if isinstance(v, float) else v)
                            for k, v in r.items()})
        return
    Path(path).write_text(json.dumps(_clean({
        "table": rows, "failed_replications": table.failed_replications,
        "replications": table.spec.replications}), indent=2) + "\n")
