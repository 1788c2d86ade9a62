"""Plain-text tables for analysis results."""

from __future__ import annotations

from typing import Sequence

from .analyzers.base import AnalysisResult

# (table name) -> [(column key, header)]
LAYOUTS: dict[str, list[tuple[str, str]]] = {
    "bug_types": [
        ("bug_type", "Bug type"),
        ("count", "Count"),
        ("pct", "%"),
        ("median_lines", "Med. lines"),
        ("median_days", "Med. days"),
    ],
    "evolution": [
        ("category", "Category"),
        ("transitions", "Count"),
        ("pct", "%"),
        ("avg_delta_lines", "Avg. Δlines"),
        ("changelog_pct", "Changelog %"),
    ],
    "tiers": [
        ("tier", "Tier"),
        ("count", "Count"),
        ("pct", "%"),
        ("median_lines", "Med. lines"),
        ("median_files", "Med. files"),
        ("median_days", "Med. days"),
    ],
}


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.1f}"
    return str(value)


def render_table(rows: Sequence[dict], columns: Sequence[tuple[str, str]] | None = None) -> str:
    if columns is None:
        keys = list(rows[0]) if rows else []
        columns = [(k, k) for k in keys]
    cells = [[_cell(r.get(k)) for k, _ in columns] for r in rows]
    headers = [h for _, h in columns]
    widths = [max([len(h)] + [len(c[i]) for c in cells]) for i, h in enumerate(headers)]

    def line(vals):
        out = []
        for i, v in enumerate(vals):
            out.append(v.ljust(widths[i]) if i == 0 else v.rjust(widths[i]))
        return "  ".join(out).rstrip()

    text = [line(headers), "  ".join("-" * w for w in widths)]
    text += [line(c) for c in cells]
    return "\n".join(text) + "\n"


def render_result(result: AnalysisResult) -> str:
    out = [f"== {result.name} =="]
    for k in sorted(result.summary):
        value = result.summary[k]
        out.append(f"{k}: {'-' if value is None else value}")
    for name in sorted(result.tables):
        rows = result.tables[name]
        out.append("")
        out.append(f"[{name}]")
        out.append(render_table(rows, LAYOUTS.get(name)).rstrip("\n"))
    return "\n".join(out) + "\n"
