"""Rendering of command reports as JSON, CSV or Markdown.

A report is a plain dict with a ``command`` name and a list of flat ``rows``;
anything else on it (notes, verdicts) only appears in the JSON form.
"""

from __future__ import annotations

import csv
import io
import json

FORMATS = ("json", "csv", "md")


def _columns(rows: list[dict]) -> list[str]:
    cols: list[str] = []
    for row in rows:
        cols.extend(k for k in row if k not in cols)
    return cols


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def render_csv(report: dict) -> str:
    rows = report.get("rows", [])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = _columns(rows)
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in cols])
    return buf.getvalue()


def render_md(report: dict) -> str:
    rows = report.get("rows", [])
    cols = _columns(rows)
    out = [f"### {report.get('command', 'report')}", ""]
    if not cols:
        return "\n".join(out + ["(no rows)", ""])
    out.append("| " + " | ".join(cols) + " |")
    out.append("|" + "|".join("---" for _ in cols) + "|")
    for row in rows:
        out.append("| " + " | ".join(_cell(row.get(c)).replace("|", "\\|") for c in cols) + " |")
    for note in report.get("notes", []):
        out.append("")
        out.append(f"> {note}")
    return "\n".join(out) + "\n"


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return render_json(report)
    if fmt == "csv":
        return render_csv(report)
    if fmt == "md":
        return render_md(report)
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
