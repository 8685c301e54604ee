"""Writers for summary.csv, manifest.json and a minimal plot.svg."""
import csv
import io
import json
import math
import os
import platform
from collections import OrderedDict

import numpy as np

from ..errors import EmptyData, IoError

HEADER = ("kind", "method", "param", "index", "stat", "value")


def format_value(v):
    return "nan" if math.isnan(v) else repr(float(v))


def table_csv(table):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in table.rows:
        w.writerow((r.kind, r.method, r.param, r.index, r.stat, format_value(r.value)))
    return buf.getvalue()


def manifest(table, spec=None):
    from .. import __version__
    return {
        "kind": table.kind,
        "spec": spec.to_dict() if spec is not None else None,
        "master_seed": spec.seed if spec is not None else None,
        "replication_seeds": [int(s) for s in table.replication_seeds],
        "skipped": table.skipped,
        "diverged_excluded": table.diverged,
        "notes": table.notes,
        "rows": len(table.rows),
        "versions": {"mgdm": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
    }


def _series(table):
    """Group rows into plottable series keyed by (method, param, stat)."""
    groups = OrderedDict()
    for r in table.rows:
        if math.isfinite(r.value) and r.index >= 0:
            groups.setdefault((r.method, r.param, r.stat), []).append((r.index, r.value))
    return groups


def render_svg(table, width=640, height=400, pad=50):
    """Polylines of value against index, one per (method, param, stat).

    Positive series spanning more than two decades are drawn on a log10
    scale.
    """
    groups = _series(table)
    pts = [v for s in groups.values() for _, v in s]
    log = bool(pts) and min(pts) > 0 and max(pts) / min(pts) > 100
    tr = (lambda v: math.log10(v)) if log else (lambda v: v)
    xs = [i for s in groups.values() for i, _ in s] or [0, 1]
    ys = [tr(v) for v in pts] or [0, 1]
    x0, x1 = min(xs), max(xs) if max(xs) > min(xs) else min(xs) + 1
    y0, y1 = min(ys), max(ys) if max(ys) > min(ys) else min(ys) + 1

    def sx(i):
        return pad + (i - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(v):
        return height - pad - (tr(v) - y0) / (y1 - y0) * (height - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{pad}" y="20" font-size="12">{table.kind}{" (log10 scale)" if log else ""}</text>']
    for k, ((method, param, stat), s) in enumerate(groups.items()):
        c = colors[k % len(colors)]
        coords = " ".join(f"{sx(i):.2f},{sy(v):.2f}" for i, v in s)
        out.append(f'<polyline fill="none" stroke="{c}" points="{coords}"/>')
        out.append(f'<text x="{width - pad - 150}" y="{40 + 14 * k}" font-size="10" fill="{c}">'
                   f'{method} {param} {stat}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_outputs(table, out_dir, spec=None, formats=("csv", "json", "svg")):
    """Write the requested files into ``out_dir``; returns their paths."""
    if not table.rows:
        raise EmptyData("summary table is empty")
    payloads = {}
    if "csv" in formats:
        payloads["summary.csv"] = table_csv(table)
    if "json" in formats:
        payloads["manifest.json"] = json.dumps(manifest(table, spec), indent=2, sort_keys=True,
                                               default=str) + "\n"
    if "svg" in formats:
        payloads["plot.svg"] = render_svg(table)
    paths = []
    try:
        os.makedirs(out_dir, exist_ok=True)
        for name, text in payloads.items():
            path = os.path.join(out_dir, name)
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            paths.append(path)
    except OSError as e:
        raise IoError(f"cannot write outputs to {out_dir}: {e}") from e
    return paths
