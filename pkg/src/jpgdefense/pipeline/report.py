"""Text table and CSV renderings of an EvalReport (pure functions of the report)."""
from __future__ import annotations

import csv
import io
from itertools import combinations

from .evaluate import EvalReport

REPORT_FORMATS = ("text-table", "csv")

CSV_COLUMNS = [
    "record", "chain", "chain_b", "image_id", "accuracy", "mean_prob", "median", "q1", "q3",
    "whisker_low", "whisker_high", "outliers", "p1", "p2",
]


def _f(x):
    return f"{x:.6f}"


def text_table(report: EvalReport) -> str:
    width = max([len("f(x)")] + [len(n) for n in report.chains])
    lines = [f"{'f(x)':<{width}}  top1  prob"]
    for s in report.summaries:
        lines.append(f"{s.name:<{width}}  {s.accuracy:.2f}  {s.mean_prob:.2f}")
    return "\n".join(lines) + "\n"


def csv_report(report: EvalReport) -> str:
    """Summary rows (one per chain), then (p1, p2) scatter rows for every chain pair and image."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_COLUMNS)
    for s in report.summaries:
        row = {"record": "summary", "chain": s.name, "accuracy": _f(s.accuracy), "mean_prob": _f(s.mean_prob)}
        if s.box is not None:
            b = s.box
            row.update(median=_f(b.median), q1=_f(b.q1), q3=_f(b.q3), whisker_low=_f(b.whisker_low),
                       whisker_high=_f(b.whisker_high), outliers=str(b.outlier_count))
        w.writerow([row.get(c, "") for c in CSV_COLUMNS])
    n = len(report.image_ids)
    for a, b in combinations(range(len(report.chains)), 2):
        pa, pb = report.top_label_prob[:, a], report.top_label_prob[:, b]
        for i in range(n):
            w.writerow(["scatter", report.chains[a], report.chains[b], int(report.image_ids[i]), "", "", "", "", "",
                        "", "", "", _f(pa[i]), _f(pb[i])])
    return buf.getvalue()


def emit_report(report: EvalReport, format: str = "text-table") -> str:
    if format == "text-table":
        return text_table(report)
    if format == "csv":
        return csv_report(report)
    raise ValueError(f"format must be one of {REPORT_FORMATS}")
