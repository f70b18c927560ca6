"""Tiny templated-text SVG charts for quick inspection of report outputs.

Deliberately minimal: polyline and scatter charts with fixed margins, no
rendering stack. Deterministic output for byte-stable report trees.
"""

from __future__ import annotations

WIDTH, HEIGHT, MARGIN = 640, 420, 50

PALETTE = {
    "low_activity": "#4477aa",
    "observer": "#66aa55",
    "identifier": "#ee8833",
    "high_activity": "#cc3344",
    "unknown": "#888888",
}


def _scale(values, lo, hi, out_lo, out_hi):
    span = (hi - lo) or 1.0
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in values]


def _frame(title: str, x_label: str, y_label: str, body: str) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">\n'
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n'
        f'<text x="{WIDTH / 2:.0f}" y="24" text-anchor="middle" font-size="15" '
        f'font-family="sans-serif">{title}</text>\n'
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" '
        f'y2="{HEIGHT - MARGIN}" stroke="black"/>\n'
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" '
        f'stroke="black"/>\n'
        f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-size="12" font-family="sans-serif">{x_label}</text>\n'
        f'<text x="16" y="{HEIGHT / 2:.0f}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 16 {HEIGHT / 2:.0f})">'
        f"{y_label}</text>\n"
        f"{body}</svg>\n"
    )


def line_chart(
    series: dict[str, list[tuple[float, float]]],
    title: str,
    x_label: str,
    y_label: str,
) -> str:
    """Polyline chart; one labelled line per series."""
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    if not xs:
        return _frame(title, x_label, y_label, "")
    x_lo, x_hi, y_lo, y_hi = min(xs), max(xs), min(ys), max(ys)
    body = []
    colors = list(PALETTE.values())
    for idx, (name, pts) in enumerate(sorted(series.items())):
        color = colors[idx % len(colors)]
        px = _scale([p[0] for p in pts], x_lo, x_hi, MARGIN, WIDTH - MARGIN)
        py = _scale([p[1] for p in pts], y_lo, y_hi, HEIGHT - MARGIN, MARGIN)
        points = " ".join(f"{x:.1f},{y:.1f}" for x, y in zip(px, py))
        body.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{points}"/>\n'
        )
        body.append(
            f'<text x="{WIDTH - MARGIN + 4}" y="{MARGIN + 14 * idx + 10}" '
            f'font-size="10" font-family="sans-serif" fill="{color}" '
            f'text-anchor="end">{name}</text>\n'
        )
    return _frame(title, x_label, y_label, "".join(body))


def scatter_chart(
    groups: dict[str, list[tuple[float, float]]],
    title: str,
    x_label: str,
    y_label: str,
) -> str:
    """Scatter chart; one color per named group (class palette first)."""
    xs = [x for pts in groups.values() for x, _ in pts]
    ys = [y for pts in groups.values() for _, y in pts]
    if not xs:
        return _frame(title, x_label, y_label, "")
    x_lo, x_hi, y_lo, y_hi = min(xs), max(xs), min(ys), max(ys)
    body = []
    for idx, (name, pts) in enumerate(sorted(groups.items())):
        color = PALETTE.get(name, list(PALETTE.values())[idx % len(PALETTE)])
        px = _scale([p[0] for p in pts], x_lo, x_hi, MARGIN, WIDTH - MARGIN)
        py = _scale([p[1] for p in pts], y_lo, y_hi, HEIGHT - MARGIN, MARGIN)
        for x, y in zip(px, py):
            body.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="2" fill="{color}"/>\n')
        body.append(
            f'<text x="{WIDTH - MARGIN + 4}" y="{MARGIN + 14 * idx + 10}" '
            f'font-size="10" font-family="sans-serif" fill="{color}" '
            f'text-anchor="end">{name}</text>\n'
        )
    return _frame(title, x_label, y_label, "".join(body))
