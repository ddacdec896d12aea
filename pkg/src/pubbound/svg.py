"""Minimal SVG line charts: series with optional shaded ribbons, axes and legend."""

from __future__ import annotations

from dataclasses import dataclass, field
from html import escape
from pathlib import Path

import numpy as np

WIDTH, HEIGHT = 800, 600
MARGIN = {"left": 80, "right": 180, "top": 50, "bottom": 70}
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    dashed: bool = False
    color: str | None = None


@dataclass
class Chart:
    title: str
    xlabel: str
    ylabel: str
    series: list = field(default_factory=list)
    xlim: tuple | None = None
    ylim: tuple | None = None

    def add(self, series: Series) -> "Chart":
        self.series.append(series)
        return self

    def _limits(self):
        xs = np.concatenate([np.asarray(s.x, float) for s in self.series])
        ys = []
        for s in self.series:
            ys.append(np.asarray(s.y, float))
            for band in (s.lower, s.upper):
                if band is not None:
                    ys.append(np.asarray(band, float))
        ys = np.concatenate(ys)
        ys = ys[np.isfinite(ys)]
        xlim = self.xlim or (float(xs.min()), float(xs.max()))
        if self.ylim:
            ylim = self.ylim
        else:
            lo, hi = float(ys.min()), float(ys.max())
            pad = 0.05 * (hi - lo or 1.0)
            ylim = (lo - pad, hi + pad)
        if xlim[0] == xlim[1]:
            xlim = (xlim[0] - 0.5, xlim[1] + 0.5)
        return xlim, ylim

    def render(self) -> str:
        if not self.series:
            raise ValueError("chart has no series")
        (x0, x1), (y0, y1) = self._limits()
        left, top = MARGIN["left"], MARGIN["top"]
        pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

        def sx(v):
            return left + (np.asarray(v, float) - x0) / (x1 - x0) * pw

        def sy(v):
            return top + (1.0 - (np.asarray(v, float) - y0) / (y1 - y0)) * ph

        def path(xv, yv):
            return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx(xv), sy(yv)))

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
            f'width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="13">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2:.0f}" y="28" text-anchor="middle" font-size="16">'
            f"{escape(self.title)}</text>",
        ]
        # axes and ticks
        out.append(
            f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>'
        )
        for t in np.linspace(x0, x1, 6):
            px = float(sx(t))
            out.append(f'<line x1="{px:.2f}" y1="{top + ph}" x2="{px:.2f}" y2="{top + ph + 6}" stroke="black"/>')
            out.append(f'<text x="{px:.2f}" y="{top + ph + 22}" text-anchor="middle">{t:.2f}</text>')
        for t in np.linspace(y0, y1, 6):
            py = float(sy(t))
            out.append(f'<line x1="{left - 6}" y1="{py:.2f}" x2="{left}" y2="{py:.2f}" stroke="black"/>')
            out.append(f'<text x="{left - 10}" y="{py + 4:.2f}" text-anchor="end">{t:.3f}</text>')
            out.append(
                f'<line x1="{left}" y1="{py:.2f}" x2="{left + pw}" y2="{py:.2f}" stroke="#e0e0e0"/>'
            )
        out.append(
            f'<text x="{left + pw / 2:.0f}" y="{HEIGHT - 20}" text-anchor="middle">'
            f"{escape(self.xlabel)}</text>"
        )
        out.append(
            f'<text x="20" y="{top + ph / 2:.0f}" text-anchor="middle" '
            f'transform="rotate(-90 20 {top + ph / 2:.0f})">{escape(self.ylabel)}</text>'
        )
        # ribbons first, then lines
        out.append(f'<clipPath id="plot"><rect x="{left}" y="{top}" width="{pw}" height="{ph}"/></clipPath>')
        out.append('<g clip-path="url(#plot)">')
        for k, s in enumerate(self.series):
            color = s.color or PALETTE[k % len(PALETTE)]
            if s.lower is not None and s.upper is not None:
                pts = path(s.x, s.upper) + " " + path(s.x[::-1], np.asarray(s.lower)[::-1])
                out.append(f'<polygon points="{pts}" fill="{color}" fill-opacity="0.18" stroke="none"/>')
        for k, s in enumerate(self.series):
            color = s.color or PALETTE[k % len(PALETTE)]
            dash = ' stroke-dasharray="6,4"' if s.dashed else ""
            out.append(
                f'<polyline points="{path(s.x, s.y)}" fill="none" stroke="{color}" '
                f'stroke-width="2"{dash}/>'
            )
        out.append("</g>")
        # legend
        lx, ly = left + pw + 15, top + 10
        for k, s in enumerate(self.series):
            color = s.color or PALETTE[k % len(PALETTE)]
            dash = ' stroke-dasharray="6,4"' if s.dashed else ""
            y = ly + 22 * k
            out.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 28}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/>')
            out.append(f'<text x="{lx + 34}" y="{y + 4}">{escape(s.label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.render(), encoding="utf-8")
        return path


def _by(cells, scenario, direction):
    rows = [c for c in cells if c.scenario == scenario and c.direction == direction and c.estimate is not None]
    return sorted(rows, key=lambda c: c.p)


def univariate_chart(report) -> Chart:
    """Bounded effect against p with CI ribbons, both directions."""
    chart = Chart("Bounds on the overall effect", "marginal selection probability p", "theta + bias bound")
    scenario = report.cells[0].scenario
    for d, dashed in (("max", False), ("min", True)):
        rows = _by(report.cells, scenario, d)
        if rows:
            chart.add(
                Series(
                    f"{d} bound",
                    np.array([c.p for c in rows]),
                    np.array([c.estimate for c in rows]),
                    lower=np.array([c.ci[0] for c in rows]),
                    upper=np.array([c.ci[1] for c in rows]),
                    dashed=dashed,
                )
            )
    return chart


def sauc_chart(report) -> Chart:
    """SAUC bounds against p per scenario with delta-method ribbons."""
    chart = Chart("SAUC bounds", "marginal selection probability p", "SAUC")
    scenarios = sorted({c.scenario for c in report.cells})
    for k, sc in enumerate(scenarios):
        color = PALETTE[k % len(PALETTE)]
        for d, dashed in (("min", False), ("max", True)):
            rows = _by(report.cells, sc, d)
            if not rows:
                continue
            has_ci = all(len(c.ci) == 2 for c in rows)
            chart.add(
                Series(
                    f"{sc} {'lower' if d == 'min' else 'upper'}",
                    np.array([c.p for c in rows]),
                    np.array([c.estimate for c in rows]),
                    lower=np.array([c.ci[0] for c in rows]) if has_ci and d == "min" else None,
                    upper=np.array([c.ci[1] for c in rows]) if has_ci and d == "min" else None,
                    dashed=dashed,
                    color=color,
                )
            )
    return chart


def sroc_band_chart(report, scenario: str, p_values=None) -> Chart:
    """SROC bands at selected p values for one scenario, with the no-bias curve."""
    rows = np.array(report.bands[scenario], dtype=float)
    chart = Chart(f"SROC bounds ({scenario})", "false positive rate", "sensitivity", xlim=(0, 1), ylim=(0, 1))
    ps = sorted(set(rows[:, 0].tolist()), reverse=True)
    if p_values is not None:
        ps = [p for p in ps if any(abs(p - q) < 1e-9 for q in p_values)]
    for k, p in enumerate(ps):
        sel = rows[rows[:, 0] == p]
        color = PALETTE[k % len(PALETTE)]
        if p == 1.0:
            chart.add(Series("no bias (p = 1)", sel[:, 1], sel[:, 2], color="black"))
            continue
        chart.add(Series(f"p = {p:g}", sel[:, 1], sel[:, 2], lower=sel[:, 2], upper=sel[:, 3], color=color))
        chart.add(Series(f"p = {p:g} upper", sel[:, 1], sel[:, 3], dashed=True, color=color))
    return chart
