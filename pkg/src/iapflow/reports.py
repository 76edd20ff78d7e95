"""Numeric grid and report emission: matrix CSVs and flow-report JSON."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .saliency import FLOW_KINDS, FlowGrid, head_map, layer_profile, run_mean_flows


def write_matrix_csv(matrix: np.ndarray, path: str | Path) -> None:
    """Write a 2-D matrix as CSV: header row of column indices, one data
    row per row index; values use round-trip decimal formatting."""
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise ValueError("matrix must be 2-D")
    lines = ["," + ",".join(str(j) for j in range(m.shape[1]))]
    for i in range(m.shape[0]):
        lines.append(str(i) + "," + ",".join(repr(float(v)) for v in m[i]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_matrix_csv(path: str | Path) -> np.ndarray:
    rows = []
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    for line in lines[1:]:
        cells = line.split(",")
        rows.append([float(v) for v in cells[1:]])
    return np.asarray(rows)


def flow_report(grid: FlowGrid | None, meta: dict | None = None) -> dict:
    """The structured flow report for one run.

    ``per_head_flows[l][h]`` is the (qp, qr, pr) triple of that cell;
    ``layer_profile`` is its head-mean per layer; ``global_means`` the
    all-cell mean per flow kind.  All three are null when the run has no
    recognized answer step (flows undefined).
    """
    if grid is None:
        report: dict = {"per_head_flows": None, "layer_profile": None, "global_means": None}
    else:
        profile = layer_profile(grid)
        means = run_mean_flows(grid)
        report = {
            "per_head_flows": [
                [[float(v) for v in grid.data[l, h]] for h in range(grid.num_heads)]
                for l in range(grid.num_layers)
            ],
            "layer_profile": [[float(v) for v in row] for row in profile],
            "global_means": {"qp": means.i_qp, "qr": means.i_qr, "pr": means.i_pr},
        }
    if meta is not None:
        report["meta"] = meta
    return report


def write_json(payload: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_head_map_csvs(grid: FlowGrid, prefix: str | Path) -> list[Path]:
    """One L x H CSV per flow kind, named <prefix>.<kind>.csv."""
    prefix = Path(prefix)
    written = []
    for kind in FLOW_KINDS:
        path = prefix.with_name(prefix.name + f".{kind}.csv")
        write_matrix_csv(head_map(grid, kind), path)
        written.append(path)
    return written
