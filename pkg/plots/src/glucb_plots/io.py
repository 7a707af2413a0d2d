"""Strict readers for the benchmark harness CSVs; columns must match the schemas exactly."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

REGRET_COLUMNS = ["round", "policy", "mean", "q05", "q95"]
SNAPSHOT_COLUMNS = ["run", "round", "policy", "component_index", "value"]


class SchemaError(ValueError):
    """Input CSV does not match the documented harness schema."""


def _open_checked(path, expected_columns):
    if not os.path.exists(path):
        raise FileNotFoundError(f"input CSV not found: {path}")
    handle = open(path, newline="", encoding="utf-8")
    reader = csv.reader(handle)
    try:
        header = next(reader)
    except StopIteration:
        handle.close()
        raise SchemaError(f"{path}: file is empty") from None
    for column in header:
        if column not in expected_columns:
            handle.close()
            raise SchemaError(f"{path}: unknown column {column!r}")
    for column in expected_columns:
        if column not in header:
            handle.close()
            raise SchemaError(f"{path}: missing column {column!r}")
    if header != expected_columns:
        handle.close()
        raise SchemaError(f"{path}: columns must appear in the order {expected_columns}")
    return handle, reader


@dataclass
class RegretSeries:
    """Mean cumulative regret and its 5%/95% band for one policy."""

    rounds: np.ndarray
    mean: np.ndarray
    q05: np.ndarray
    q95: np.ndarray


def load_regret_quantiles(path) -> dict[str, RegretSeries]:
    handle, reader = _open_checked(path, REGRET_COLUMNS)
    rows: dict[str, list] = {}
    with handle:
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(REGRET_COLUMNS):
                raise SchemaError(f"{path}: row {line_no} has {len(row)} fields")
            rows.setdefault(row[1], []).append((int(row[0]), float(row[2]), float(row[3]), float(row[4])))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    series = {}
    for policy, values in rows.items():
        values.sort(key=lambda item: item[0])
        array = np.array(values, dtype=float)
        series[policy] = RegretSeries(array[:, 0].astype(int), array[:, 1], array[:, 2], array[:, 3])
    return series


def load_theta_snapshots(path) -> dict[str, dict[int, np.ndarray]]:
    """Per policy and snapshot round, the (runs, dim) estimator matrix."""
    handle, reader = _open_checked(path, SNAPSHOT_COLUMNS)
    cells: dict[str, dict[int, dict[tuple[int, int], float]]] = {}
    with handle:
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(SNAPSHOT_COLUMNS):
                raise SchemaError(f"{path}: row {line_no} has {len(row)} fields")
            run, round_no, policy, comp, value = int(row[0]), int(row[1]), row[2], int(row[3]), float(row[4])
            cells.setdefault(policy, {}).setdefault(round_no, {})[(run, comp)] = value
    if not cells:
        raise SchemaError(f"{path}: no data rows")
    snapshots: dict[str, dict[int, np.ndarray]] = {}
    for policy, by_round in cells.items():
        snapshots[policy] = {}
        for round_no, entries in by_round.items():
            runs = sorted({run for run, _ in entries})
            dims = sorted({comp for _, comp in entries})
            matrix = np.empty((len(runs), len(dims)))
            for (run, comp), value in entries.items():
                matrix[runs.index(run), dims.index(comp)] = value
            snapshots[policy][round_no] = matrix
    return snapshots
