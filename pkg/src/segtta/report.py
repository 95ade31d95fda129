"""Result tables in CSV and markdown.

Column order is fixed: IoU, Dice, HD95 for two-class runs; mIoU, aIoU,
mDice, aDice, HD95 for multi-class. Overlap metrics are rendered as
percentages with two decimals, HD95 in millimeters; delta columns against
the reference variant carry an explicit sign. CSV and markdown contain the
same formatted values, so the two formats never disagree numerically.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .errors import IoFailure
from .pipeline import RunResult

FORMATS = ("csv", "markdown")


def _metric_columns(num_classes: int):
    """(column header, MetricReport/aggregate field) pairs in table order."""
    if num_classes == 2:
        return [("IoU", "aiou"), ("Dice", "adice"), ("HD95", "hd95")]
    return [
        ("mIoU", "miou"),
        ("aIoU", "aiou"),
        ("mDice", "mdice"),
        ("aDice", "adice"),
        ("HD95", "hd95"),
    ]


def _fmt(field: str, value) -> str:
    if value is None:
        return ""
    if field == "hd95":
        return f"{value:.2f}"
    return f"{value * 100:.2f}"


def _fmt_delta(field: str, value, ref) -> str:
    if value is None or ref is None:
        return ""
    if field == "hd95":
        return f"{value - ref:+.2f}"
    return f"{(value - ref) * 100:+.2f}"


def _report_value(report, field: str):
    if report is None:
        return None
    if field == "hd95":
        return report.hd95_mm
    return getattr(report, field)


def _rows(result: RunResult):
    """All table rows as dicts of already formatted strings."""
    columns = _metric_columns(result.num_classes)
    reference = result.aggregates.get(result.reference, {}) if result.reference else {}
    rows = []
    for variant in result.variants:
        agg = result.aggregates.get(variant)
        if agg is None:
            continue
        row = {"scope": "mean", "case": "", "variant": variant}
        for header, field in columns:
            row[header] = _fmt(field, agg.get(field))
            if variant == result.reference or not reference:
                row[f"d{header}"] = ""
            else:
                row[f"d{header}"] = _fmt_delta(
                    field, agg.get(field), reference.get(field)
                )
        row["HD95_undefined"] = str(agg.get("hd95_undefined", ""))
        fg = agg.get("fg_mm3")
        row["FG_mm3"] = f"{fg:.1f}" if fg is not None else ""
        rows.append(row)
    for case_id in sorted(result.per_case):
        for variant in result.variants:
            if variant not in result.per_case[case_id]:
                continue
            report = result.per_case[case_id][variant]
            row = {"scope": "case", "case": case_id, "variant": variant}
            for header, field in columns:
                row[header] = _fmt(field, _report_value(report, field))
                row[f"d{header}"] = ""
            row["HD95_undefined"] = ""
            fg = result.fg_volume.get(case_id, {}).get(variant)
            row["FG_mm3"] = f"{fg:.1f}" if fg is not None else ""
            rows.append(row)
    return rows


def _headers(result: RunResult):
    headers = ["scope", "case", "variant"]
    for header, _ in _metric_columns(result.num_classes):
        headers.append(header)
    for header, _ in _metric_columns(result.num_classes):
        headers.append(f"d{header}")
    headers += ["HD95_undefined", "FG_mm3"]
    return headers


def render_csv(result: RunResult) -> str:
    headers = _headers(result)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(headers)
    for row in _rows(result):
        writer.writerow([row[h] for h in headers])
    return buf.getvalue()


def render_markdown(result: RunResult) -> str:
    headers = _headers(result)
    rows = _rows(result)
    lines = [f"# {result.dataset}", ""]
    if result.reference:
        lines += [f"Deltas are taken against the `{result.reference}` row.", ""]
    mean_rows = [r for r in rows if r["scope"] == "mean"]
    case_rows = [r for r in rows if r["scope"] == "case"]
    for title, section, cols in (
        ("Aggregate (mean over cases)", mean_rows, headers[2:]),
        ("Per-case", case_rows, headers[1:]),
    ):
        lines.append(f"## {title}")
        lines.append("")
        lines.append("| " + " | ".join(cols) + " |")
        lines.append("|" + "|".join(" --- " for _ in cols) + "|")
        for row in section:
            lines.append("| " + " | ".join(row[c] for c in cols) + " |")
        lines.append("")
    if result.failures:
        lines.append("## Failures")
        lines.append("")
        for case_id, message in result.failures:
            lines.append(f"- `{case_id}`: {message}")
        lines.append("")
    return "\n".join(lines)


def render(result: RunResult, format: str = "markdown") -> str:
    if format not in FORMATS:
        raise ValueError(f"format={format!r} not in {FORMATS}")
    return render_csv(result) if format == "csv" else render_markdown(result)


def emit_report(result: RunResult, format: str, path) -> Path:
    """Render and write a report file; returns the path written."""
    text = render(result, format)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as e:
        raise IoFailure(f"cannot write report {path}: {e}") from e
    return path
