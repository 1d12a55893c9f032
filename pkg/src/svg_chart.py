"""Standalone SVG line charts for sweep results."""

import html
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from sweeps import Axis, SweepResult

logger = logging.getLogger(__name__)

COLORS = [
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#ff7f0e",
    "#9467bd",
    "#8c564b",
]

WIDTH = 1024
HEIGHT = 640
MARGIN_LEFT = 100
MARGIN_RIGHT = 240
MARGIN_TOP = 70
MARGIN_BOTTOM = 100

FLAT_RTOL = 1e-9

AXIS_LABELS = {
    Axis.EPS_MIN_OF_USER: ("minimum rate of user {user} (10^9 ebit/s)", 1e9),
    Axis.TAU: ("time window (ns)", 1.0),
    Axis.NUM_USERS: ("number of users", 1.0),
    Axis.DISTANCE_OF_USER: ("distance of user {user} (km)", 1.0),
    Axis.MEMORY_CAPACITY: ("memory capacity (qubits)", 1.0),
}


class ChartError(ValueError):
    """Raised when a sweep result cannot be drawn."""


def _escape(text: str) -> str:
    return html.escape(text, quote=True)


def _format_tick(value: float) -> str:
    if abs(value) >= 100:
        return f"{value:.0f}"
    if abs(value) >= 10:
        return f"{value:.1f}"
    return f"{value:.2f}"


def _series(result: SweepResult, kind: str, scale: float) -> List[Tuple[str, List[Tuple[float, float]]]]:
    feasible = result.feasible_rows
    if kind == "objective":
        return [("objective", [(row.axis_value / scale, row.objective) for row in feasible])]
    size = max(row.size for row in feasible)
    series = []
    for j in range(size):
        points = [(row.axis_value / scale, row.rates[j] / 1e9) for row in feasible if j < row.size]
        series.append((f"user {j}", points))
    return series


def _is_flat(values: Sequence[float]) -> bool:
    top = max(abs(v) for v in values)
    return max(values) - min(values) <= FLAT_RTOL * max(top, 1.0)


def render_svg(result: SweepResult, destination: Union[str, Path], kind: Optional[str] = None) -> None:
    """
    Draw rates (one polyline per user) or the objective against the swept axis.

    Args:
        result: Sweep result with at least two feasible points
        destination: Output .svg path
        kind: 'rates' or 'objective'; the sweep spec's chart kind when omitted

    Raises:
        ChartError: If fewer than two points are feasible or kind is unknown
    """
    kind = kind or result.spec.chart_kind
    if kind not in ("rates", "objective"):
        raise ChartError(f"Unknown chart kind {kind!r} (expected rates or objective)")
    feasible = result.feasible_rows
    if len(feasible) < 2:
        raise ChartError(
            f"Sweep {result.spec.name} has {len(feasible)} feasible point(s); "
            "a chart needs at least 2, use the CSV output instead"
        )

    spec = result.spec
    label_template, scale = AXIS_LABELS[spec.axis]
    x_label = label_template.format(user=spec.user)
    y_label = "objective (expected successful pairs)" if kind == "objective" else "rate (10^9 ebit/s)"
    title = spec.title or spec.name

    plot_left = MARGIN_LEFT
    plot_right = WIDTH - MARGIN_RIGHT
    plot_top = MARGIN_TOP
    plot_bottom = HEIGHT - MARGIN_BOTTOM
    plot_width = plot_right - plot_left
    plot_height = plot_bottom - plot_top

    series = _series(result, kind, scale)
    all_x = [row.axis_value / scale for row in result.rows]
    y_values = [y for _, points in series for _, y in points]

    x_min, x_max = min(all_x), max(all_x)
    if x_max <= x_min:
        x_min -= 1.0
        x_max += 1.0
    y_min = min(0.0, min(y_values))
    y_max = max(y_values)
    if y_max <= y_min:
        y_max = y_min + 1.0
    y_max *= 1.10

    def x_to_px(x: float) -> float:
        return plot_left + ((x - x_min) / (x_max - x_min)) * plot_width

    def y_to_px(y: float) -> float:
        return plot_bottom - ((y - y_min) / (y_max - y_min)) * plot_height

    lines: List[str] = []
    lines.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">')
    lines.append('<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>')
    lines.append(
        f'<text x="{WIDTH / 2:.1f}" y="36" text-anchor="middle" font-size="22" font-family="Arial">{_escape(title)}</text>'
    )

    # Infeasible points: shade half-way to each neighbour
    for index, row in enumerate(result.rows):
        if row.feasible:
            continue
        x = all_x[index]
        left = (all_x[index - 1] + x) / 2 if index > 0 else x
        right = (all_x[index + 1] + x) / 2 if index + 1 < len(all_x) else x
        px_left, px_right = x_to_px(left), x_to_px(right)
        if px_right - px_left < 4:
            px_left, px_right = px_left - 2, px_right + 2
        lines.append(
            f'<rect class="infeasible" x="{px_left:.2f}" y="{plot_top}" width="{px_right - px_left:.2f}" '
            f'height="{plot_height}" fill="#bbbbbb" fill-opacity="0.35"><title>{_escape(row.status)}</title></rect>'
        )

    y_tick_count = 6
    for i in range(y_tick_count + 1):
        value = y_min + (y_max - y_min) * i / y_tick_count
        y = y_to_px(value)
        lines.append(f'<line x1="{plot_left}" y1="{y:.2f}" x2="{plot_right}" y2="{y:.2f}" stroke="#d9d9d9" stroke-width="1"/>')
        lines.append(
            f'<text x="{plot_left - 10}" y="{y + 5:.2f}" text-anchor="end" font-size="13" font-family="Arial">{_format_tick(value)}</text>'
        )

    x_tick_count = 6
    for i in range(x_tick_count + 1):
        value = x_min + (x_max - x_min) * i / x_tick_count
        x = x_to_px(value)
        lines.append(f'<line x1="{x:.2f}" y1="{plot_bottom}" x2="{x:.2f}" y2="{plot_bottom + 6}" stroke="#000000" stroke-width="1"/>')
        lines.append(
            f'<text x="{x:.2f}" y="{plot_bottom + 26}" text-anchor="middle" font-size="13" font-family="Arial">{_format_tick(value)}</text>'
        )

    lines.append(f'<line x1="{plot_left}" y1="{plot_bottom}" x2="{plot_right}" y2="{plot_bottom}" stroke="#000000" stroke-width="2"/>')
    lines.append(f'<line x1="{plot_left}" y1="{plot_top}" x2="{plot_left}" y2="{plot_bottom}" stroke="#000000" stroke-width="2"/>')

    legend_x = plot_right + 22
    legend_y = plot_top + 22
    for idx, (label, points) in enumerate(series):
        color = COLORS[idx % len(COLORS)]
        poly_points = " ".join(f"{x_to_px(x):.2f},{y_to_px(y):.2f}" for x, y in points)
        lines.append(f'<polyline fill="none" stroke="{color}" stroke-width="3" points="{poly_points}"/>')
        for x, y in points:
            lines.append(f'<circle cx="{x_to_px(x):.2f}" cy="{y_to_px(y):.2f}" r="3" fill="{color}"/>')

        ly = legend_y + idx * 28
        lines.append(f'<line x1="{legend_x}" y1="{ly}" x2="{legend_x + 26}" y2="{ly}" stroke="{color}" stroke-width="3"/>')
        lines.append(
            f'<text x="{legend_x + 34}" y="{ly + 5}" text-anchor="start" font-size="14" font-family="Arial">{_escape(label)}</text>'
        )

    objectives = [row.objective for row in feasible]
    if _is_flat(objectives):
        note_y = legend_y + len(series) * 28 + 20
        lines.append(
            f'<text class="flat-objective" x="{legend_x}" y="{note_y}" text-anchor="start" font-size="13" '
            f'font-family="Arial">objective flat at {objectives[0]:.6g}</text>'
        )

    lines.append(
        f'<text x="{(plot_left + plot_right) / 2:.1f}" y="{HEIGHT - 30}" text-anchor="middle" font-size="16" font-family="Arial">{_escape(x_label)}</text>'
    )
    lines.append(
        f'<text x="30" y="{(plot_top + plot_bottom) / 2:.1f}" text-anchor="middle" font-size="16" font-family="Arial" transform="rotate(-90 30 {(plot_top + plot_bottom) / 2:.1f})">{_escape(y_label)}</text>'
    )
    lines.append("</svg>")

    output_path = Path(destination)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Wrote {kind} chart for {spec.name} to {output_path}")
