"""CSV and SVG emission for experiment reports; output bytes depend only on the report."""

from __future__ import annotations

import csv
import io
from xml.sax.saxutils import escape

from ..errors import UnsupportedFormat

SVG_WIDTH = 640
SVG_HEIGHT = 480
PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860")


def _fmt(value: float) -> str:
    return repr(float(value))


def report_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["condition", "metric", "value"])
    for condition, metric, value in report.rows:
        w.writerow([condition, metric, _fmt(value)])
    return buf.getvalue()


def report_svg(report) -> str:
    """One bar per (condition, metric) row, grouped and coloured by condition."""
    rows = list(report.rows)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" '
        f'viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">',
        f'<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>',
        f'<text x="{SVG_WIDTH // 2}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="16">{escape(report.name)}</text>',
    ]
    if rows:
        left, right, top, bottom = 60, 20, 40, 140
        plot_w = SVG_WIDTH - left - right
        plot_h = SVG_HEIGHT - top - bottom
        values = [v for _, _, v in rows]
        hi = max(max(values), 0.0)
        lo = min(min(values), 0.0)
        span = (hi - lo) or 1.0
        zero_y = top + plot_h * hi / span
        slot = plot_w / len(rows)
        conditions = list(dict.fromkeys(c for c, _, _ in rows))
        out.append(
            f'<line x1="{left}" y1="{zero_y:.2f}" x2="{SVG_WIDTH - right}" y2="{zero_y:.2f}" stroke="black"/>'
        )
        for i, (condition, metric, value) in enumerate(rows):
            x = left + i * slot + slot * 0.1
            h = plot_h * abs(value) / span
            y = zero_y - h if value >= 0 else zero_y
            colour = PALETTE[conditions.index(condition) % len(PALETTE)]
            out.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{slot * 0.8:.2f}" height="{h:.2f}" fill="{colour}">'
                f"<title>{escape(condition)} {escape(metric)} = {value:.6g}</title></rect>"
            )
            label_x = x + slot * 0.4
            label_y = SVG_HEIGHT - bottom + 12
            out.append(
                f'<text x="{label_x:.2f}" y="{label_y}" font-family="sans-serif" font-size="10" '
                f'transform="rotate(45 {label_x:.2f} {label_y})">{escape(condition)}/{escape(metric)}</text>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(report, fmt: str, path) -> None:
    if fmt == "csv":
        text = report_csv(report)
    elif fmt == "svg":
        text = report_svg(report)
    else:
        raise UnsupportedFormat(f"report format {fmt!r}; expected 'csv' or 'svg'")
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
