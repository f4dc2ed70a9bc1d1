"""File emitters: matrices as CSV, the bundled JSON report, chord edges, LRFR heatmap SVG."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from ._io import fmt_float, write_csv
from .compare import MARGIN, ClusterODMatrix, ComparisonReport, NormalizedFlows, SamplingRateTable
from .errors import ConfigError


def write_od_matrix(m: ClusterODMatrix, path) -> Path:
    frame = m.with_margins()
    rows = [[idx, *map(int, row)] for idx, row in zip(frame.index, frame.to_numpy())]
    return write_csv(path, ["origin", *frame.columns], rows)


def read_od_matrix(path, dataset_id: str = "") -> ClusterODMatrix:
    frame = pd.read_csv(path, index_col=0, dtype={"origin": str})
    frame.columns = frame.columns.astype(str)
    frame.index = frame.index.astype(str)
    return ClusterODMatrix.from_margined_frame(frame, dataset_id)


def write_cell_matrix(labels: Sequence[str], values, path) -> Path:
    """Square float matrix; masked cells become empty fields."""
    values = np.ma.asarray(values)
    mask = np.ma.getmaskarray(values)
    data = values.filled(np.nan)
    rows = []
    for i, lab in enumerate(labels):
        rows.append([lab, *("" if mask[i, j] else fmt_float(float(data[i, j])) for j in range(len(labels)))])
    return write_csv(path, ["origin", *labels], rows)


def write_undefined_flags(labels: Sequence[str], values, path) -> Path:
    """Sidecar listing the cells that carry no finite value."""
    mask = np.ma.getmaskarray(np.ma.asarray(values))
    rows = [(labels[i], labels[j]) for i, j in zip(*np.nonzero(mask))]
    return write_csv(path, ["origin", "destination"], rows)


def write_rf_matrix(report_rf, path) -> Path:
    """Relative frequencies with ``U`` margins (row, column and grand shares)."""
    labels = list(report_rf.labels)
    v = report_rf.values
    rows = [[lab, *(fmt_float(x) for x in v[i]), fmt_float(v[i].sum())] for i, lab in enumerate(labels)]
    rows.append([MARGIN, *(fmt_float(x) for x in v.sum(axis=0)), fmt_float(v.sum())])
    return write_csv(path, ["origin", *labels, MARGIN], rows)


def write_sampling_rates(table: SamplingRateTable, path) -> Path:
    header = [
        "cluster",
        "population",
        "devices_nighttime",
        "devices_daytime",
        "nighttime_sampling_rate_pct",
        "daytime_sampling_rate_pct",
    ]
    rows = [[lab, *(fmt_float(float(x)) for x in row)] for lab, row in zip(table.frame.index, table.frame.to_numpy())]
    return write_csv(path, header, rows)


def write_normalized(items: Sequence[tuple[str, NormalizedFlows]], path) -> Path:
    """One row per (dataset, cluster); ``flagged`` rows have no usable denominator."""
    rows, basis = [], "denominator"
    for dataset, nf in items:
        basis = nf.basis
        for i, lab in enumerate(nf.labels):
            vals = (nf.denominator[i], nf.within[i], nf.from_[i], nf.to[i])
            rows.append([dataset, lab, *(fmt_float(float(v)) for v in vals), int(lab in nf.flagged)])
    return write_csv(path, ["dataset", "cluster", basis, "within", "from", "to", "flagged"], rows)


def _masked_to_list(values) -> list:
    values = np.ma.asarray(values)
    mask = np.ma.getmaskarray(values)
    data = values.filled(np.nan)
    return [[None if mask[i, j] else float(data[i, j]) for j in range(data.shape[1])] for i in range(data.shape[0])]


def report_dict(
    report: ComparisonReport,
    sampling: SamplingRateTable | None = None,
    normalized: Mapping[str, NormalizedFlows] | None = None,
    correlations: Mapping[str, float] | None = None,
) -> dict:
    out = {
        "labels": list(report.labels),
        "metadata": dict(report.metadata),
        "smoothing_epsilon": report.smoothing_epsilon,
        "od": {
            m.dataset_id: {"cells": m.cells.tolist(), "row_margin": m.row_margin.tolist(),
                           "col_margin": m.col_margin.tolist(), "grand_total": m.grand_total}
            for m in (report.od_a, report.od_b)
        },
        "rf": {rf.dataset_id: rf.values.tolist() for rf in (report.rf_a, report.rf_b)},
        "rfr": _masked_to_list(report.rfr),
        "lrfr": _masked_to_list(report.lrfr),
        "undefined_cells": [
            [report.labels[i], report.labels[j]] for i, j in zip(*np.nonzero(np.ma.getmaskarray(report.lrfr)))
        ],
    }
    if sampling is not None:
        out["sampling_rates"] = {
            lab: {k: float(v) for k, v in row.items()} for lab, row in sampling.frame.iterrows()
        }
    if normalized:
        out["normalized"] = {
            basis: {
                "denominator": n.basis,
                "flagged": list(n.flagged),
                "within": _nan_list(n.within),
                "from": _nan_list(n.from_),
                "to": _nan_list(n.to),
            }
            for basis, n in normalized.items()
        }
    if correlations:
        out["correlations"] = dict(correlations)
    return out


def _nan_list(v) -> list:
    return [None if (isinstance(x, float) and math.isnan(x)) else float(x) for x in v]


def write_json(data, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return path


def emit_chord_edges(m: ClusterODMatrix, path) -> Path:
    """``source,target,value`` for every nonzero cell, in matrix label order."""
    rows = [
        (m.labels[i], m.labels[j], int(m.cells[i, j]))
        for i in range(len(m.labels))
        for j in range(len(m.labels))
        if m.cells[i, j] != 0
    ]
    return write_csv(path, ["source", "target", "value"], rows)


# ---------------------------------------------------------------------------
# Heatmap

NEUTRAL = (247, 247, 247)
RED = (178, 24, 43)
BLUE = (33, 102, 172)


def diverging_color(value: float, vmax: float) -> str:
    """Blue (negative) - near-white (0) - red (positive), linear in ``value / vmax``."""
    t = 0.0 if vmax <= 0 else max(-1.0, min(1.0, value / vmax))
    end = RED if t > 0 else BLUE
    a = abs(t)
    rgb = tuple(round(n + (e - n) * a) for n, e in zip(NEUTRAL, end))
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def emit_heatmap(values, labels: Sequence[str], path, vmax: float | None = None, title: str = "LRFR") -> Path:
    """Grid SVG of a (masked) matrix, colour centred at 0, masked cells hatched."""
    values = np.ma.asarray(values)
    mask = np.ma.getmaskarray(values)
    data = values.filled(0.0)
    n = len(labels)
    if data.shape != (n, n):
        raise ConfigError(f"matrix shape {data.shape} does not match {n} labels")
    if vmax is None:
        finite = np.abs(data[~mask])
        vmax = float(finite.max()) if finite.size and finite.max() > 0 else 1.0
    cell, pad_left, pad_top = 56, 90, 60
    width, height = pad_left + n * cell + 20, pad_top + n * cell + 40
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" "
        "patternTransform=\"rotate(45)\"><rect width=\"6\" height=\"6\" fill=\"#ffffff\"/>"
        "<line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#999999\" stroke-width=\"2\"/></pattern></defs>",
        f'<text x="{pad_left}" y="20" font-size="14">{title} (origin rows, destination columns; '
        f"scale ±{vmax:.2f})</text>",
    ]
    for j, lab in enumerate(labels):
        x = pad_left + j * cell + cell / 2
        out.append(f'<text x="{x:g}" y="{pad_top - 8}" text-anchor="middle">{lab}</text>')
    for i, lab in enumerate(labels):
        y = pad_top + i * cell
        out.append(f'<text x="{pad_left - 8}" y="{y + cell / 2 + 4:g}" text-anchor="end">{lab}</text>')
        for j in range(n):
            x = pad_left + j * cell
            if mask[i, j]:
                out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="url(#hatch)" stroke="#ffffff"/>')
                continue
            v = float(data[i, j])
            out.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{diverging_color(v, vmax)}" stroke="#ffffff"/>'
            )
            ink = "#ffffff" if abs(v) / vmax > 0.6 else "#222222"
            out.append(
                f'<text x="{x + cell / 2:g}" y="{y + cell / 2 + 4:g}" text-anchor="middle" fill="{ink}">{v:.2f}</text>'
            )
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path
