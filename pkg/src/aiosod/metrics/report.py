"""Benchmark tables: aligned text for reading, CSV for scripts."""

from __future__ import annotations

import csv
import io
import math

from aiosod.metrics.cost import CostReport
from aiosod.metrics.saliency import METRICS, MetricsReport

MISSING = "\u2014"  # rendered for metrics that were not computed
HEADERS = {"s_measure": "Sm↑", "max_f": "Fβmax↑", "e_measure": "Eφmax↑",
           "mae": "MAE↓"}


def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return MISSING
    return f"{value:.4f}"


def benchmark_text(reports: list[MetricsReport], cost: CostReport | None = None) -> str:
    if not reports:
        raise ValueError("benchmark report needs at least one evaluated dataset")
    cols = ["Dataset", "N"] + [HEADERS[m] for m in METRICS]
    rows = [[r.dataset, str(r.count)] + [_fmt(getattr(r, m)) for m in METRICS] for r in reports]
    widths = [max(len(x) for x in col) for col in zip(cols, *rows)]
    line = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    out = [line(cols), "  ".join("-" * w for w in widths)] + [line(r) for r in rows]
    if cost is not None:
        out += ["", cost_text(cost)]
    return "\n".join(out) + "\n"


def cost_text(cost: CostReport) -> str:
    p = cost.params
    lines = [f"# FLOPs: {cost.convention}",
             f"params total      {p['total'] / 1e6:8.3f} M",
             *(f"  {k:<15} {v / 1e6:8.3f} M" for k, v in p.items() if k != "total"),
             f"flops rgb         {cost.flops_rgb / 1e9:8.3f} G  (+{cost.attention_rgb / 1e9:.3f} G attention)",
             f"flops paired      {cost.flops_paired / 1e9:8.3f} G  (+{cost.attention_paired / 1e9:.3f} G attention)",
             f"flops_rgb < flops_paired: {cost.flops_rgb < cost.flops_paired}"]
    for name in ("fps_rgb", "fps_paired"):
        value = getattr(cost, name)
        lines.append(f"{name:<17} {MISSING if value is None else f'{value:8.2f}'}")
    return "\n".join(lines)


def benchmark_csv(reports: list[MetricsReport]) -> str:
    """Full-precision CSV; missing metrics are empty cells."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", "count", *METRICS])
    for r in reports:
        w.writerow([r.dataset, r.count, *("" if getattr(r, m) is None else repr(getattr(r, m)) for m in METRICS)])
    return buf.getvalue()


def parse_benchmark_csv(text: str) -> list[MetricsReport]:
    reports = []
    for row in csv.DictReader(io.StringIO(text)):
        values = {m: (float(row[m]) if row[m] else None) for m in METRICS}
        reports.append(MetricsReport(row["dataset"], int(row["count"]), **values))
    return reports


def benchmark_report(reports: list[MetricsReport], cost: CostReport | None = None) -> tuple[str, str]:
    """(text table, CSV) for the given per-dataset reports."""
    return benchmark_text(reports, cost), benchmark_csv(reports)


def per_image_csv(reports: list[MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", "image", *METRICS])
    for r in reports:
        for name in sorted(r.per_image):
            w.writerow([r.dataset, name, *(repr(r.per_image[name][m]) for m in METRICS)])
    return buf.getvalue()
