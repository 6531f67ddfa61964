"""Minimal deterministic SVG charts (no plotting dependency, no timestamps)."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

from .simulator import HRhoGrid, SpeedupCurve

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=64, right=160, top=40, bottom=52)
PALETTE = ("#e6862a", "#2a9d4b", "#c0392b", "#d4b106", "#2c6fbb", "#7d3c98")
DASHES = ("4 3", "", "", "8 4", "", "2 2")


def _n(v: float) -> str:
    return f"{v:.2f}"


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.floor(lo / step) * step
    ticks = []
    t = start
    while t <= hi + step * 1e-9:
        ticks.append(round(t, 12))
        t += step
    return ticks


class _Frame:
    def __init__(self, xs: Sequence[float], ys: Sequence[float], title: str,
                 xlabel: str, ylabel: str, x_ticks: bool = True):
        self.show_x_ticks = x_ticks
        self.xt = _nice_ticks(min(xs), max(xs))
        self.yt = _nice_ticks(min(0.0, min(ys)), max(ys))
        self.x0, self.x1 = self.xt[0], self.xt[-1]
        self.y0, self.y1 = self.yt[0], self.yt[-1]
        self.pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        ]
        self._axes(xlabel, ylabel)

    def sx(self, x: float) -> float:
        return MARGIN["left"] + (x - self.x0) / ((self.x1 - self.x0) or 1) * self.pw

    def sy(self, y: float) -> float:
        return MARGIN["top"] + self.ph - (y - self.y0) / ((self.y1 - self.y0) or 1) * self.ph

    def _axes(self, xlabel: str, ylabel: str) -> None:
        left, bottom = MARGIN["left"], MARGIN["top"] + self.ph
        p = self.parts
        for t in self.yt:
            y = _n(self.sy(t))
            p.append(f'<line x1="{left}" y1="{y}" x2="{left + self.pw}" y2="{y}" stroke="#ddd"/>')
            p.append(f'<text x="{left - 6}" y="{y}" text-anchor="end" dy="4">{t:g}</text>')
        for t in self.xt if self.show_x_ticks else ():
            x = _n(self.sx(t))
            p.append(f'<text x="{x}" y="{bottom + 16}" text-anchor="middle">{t:g}</text>')
        p.append(f'<line x1="{left}" y1="{bottom}" x2="{left + self.pw}" y2="{bottom}" stroke="black"/>')
        p.append(f'<line x1="{left}" y1="{MARGIN["top"]}" x2="{left}" y2="{bottom}" stroke="black"/>')
        p.append(f'<text x="{left + self.pw / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
        p.append(f'<text transform="translate(16 {MARGIN["top"] + self.ph / 2}) rotate(-90)" '
                 f'text-anchor="middle">{escape(ylabel)}</text>')

    def legend(self, names: Sequence[str], kinds: Sequence[str]) -> None:
        x = WIDTH - MARGIN["right"] + 14
        for i, (name, kind) in enumerate(zip(names, kinds)):
            y = MARGIN["top"] + 10 + 18 * i
            color = PALETTE[i % len(PALETTE)]
            if kind == "bar":
                self.parts.append(f'<rect x="{x}" y="{y - 6}" width="18" height="10" fill="{color}"/>')
            else:
                dash = DASHES[i % len(DASHES)]
                dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
                self.parts.append(f'<line x1="{x}" y1="{y}" x2="{x + 18}" y2="{y}" '
                                  f'stroke="{color}" stroke-width="2"{dash_attr}/>')
            self.parts.append(f'<text x="{x + 24}" y="{y + 4}">{escape(name)}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def line_chart(series: Mapping[str, tuple[Sequence[float], Sequence[float]]],
               title: str, xlabel: str, ylabel: str) -> str:
    if not series or any(len(xs) == 0 for xs, _ in series.values()):
        raise ValueError("nothing to plot")
    all_x = [x for xs, _ in series.values() for x in xs]
    all_y = [y for _, ys in series.values() for y in ys]
    fr = _Frame(all_x, all_y, title, xlabel, ylabel)
    for i, (name, (xs, ys)) in enumerate(series.items()):
        pts = " ".join(f"{_n(fr.sx(x))},{_n(fr.sy(y))}" for x, y in zip(xs, ys))
        dash = DASHES[i % len(DASHES)]
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        fr.parts.append(f'<polyline fill="none" stroke="{PALETTE[i % len(PALETTE)]}" '
                        f'stroke-width="2"{dash_attr} points="{pts}"/>')
    fr.legend(list(series), ["line"] * len(series))
    return fr.render()


def stacked_bars(labels: Sequence[str], stacks: Mapping[str, Sequence[float]],
                 title: str, ylabel: str) -> str:
    if not labels or not stacks:
        raise ValueError("nothing to plot")
    totals = [sum(vals[i] for vals in stacks.values()) for i in range(len(labels))]
    fr = _Frame([0, len(labels)], [0.0, max(totals)], title, "", ylabel, x_ticks=False)
    slot = fr.pw / len(labels)
    bar = slot * 0.7
    for i, label in enumerate(labels):
        x = MARGIN["left"] + i * slot + (slot - bar) / 2
        base = 0.0
        for k, vals in enumerate(stacks.values()):
            top = base + vals[i]
            y_top, y_base = fr.sy(top), fr.sy(base)
            fr.parts.append(f'<rect x="{_n(x)}" y="{_n(y_top)}" width="{_n(bar)}" '
                            f'height="{_n(y_base - y_top)}" fill="{PALETTE[k % len(PALETTE)]}"/>')
            base = top
        fr.parts.append(f'<text x="{_n(x + bar / 2)}" y="{MARGIN["top"] + fr.ph + 30}" '
                        f'text-anchor="middle" font-size="9">{escape(label)}</text>')
    fr.legend(list(stacks), ["bar"] * len(stacks))
    return fr.render()


def curve_svg(curve: SpeedupCurve, title: str = "") -> str:
    ms = curve.column("M")
    return line_chart(
        {"T_cmt": (ms, curve.column("t_cmt")), "T_tnf": (ms, curve.column("t_tnf"))},
        title or f"T_cmt vs T_tnf per update ({curve.label})", "workers M", "seconds",
    )


def comparison_svg(curves: Mapping[str, SpeedupCurve], title: str = "") -> str:
    return line_chart(
        {name: (c.column("M"), c.column("speedup")) for name, c in curves.items()},
        title or "speedup vs workers", "workers M", "speedup",
    )


def grid_svg(grid: HRhoGrid, title: str = "") -> str:
    labels = [f"h={c.h:g} rho={c.rho:g}" for c in grid.cells]
    stacks = {"T_cmt": [c.breakdown.t_cmt for c in grid.cells],
              "T_tnf": [c.breakdown.t_tnf for c in grid.cells]}
    return stacked_bars(labels, stacks, title or f"homomorphic update, M={grid.workers}", "seconds")


def emit_svg(data, path) -> Path:
    """Render a curve, a name->curve mapping, or an h/rho grid to ``path``.

    Nothing is written when the data is empty.
    """
    if isinstance(data, SpeedupCurve):
        if not len(data):
            raise ValueError("empty curve")
        text = curve_svg(data)
    elif isinstance(data, HRhoGrid):
        if not len(data):
            raise ValueError("empty grid")
        text = grid_svg(data)
    elif isinstance(data, Mapping):
        if not data or any(not len(c) for c in data.values()):
            raise ValueError("empty curve set")
        text = comparison_svg(data)
    else:
        raise TypeError(f"cannot plot {type(data).__name__}")
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path
