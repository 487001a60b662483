"""Minimal standalone SVG line charts built with ElementTree."""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#000000", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


@dataclass
class Series:
    label: str
    xs: Sequence[float]
    ys: Sequence[float]
    dashed: bool = False


@dataclass
class Chart:
    title: str
    xlabel: str
    ylabel: str
    log2_x: bool = False
    log2_y: bool = False
    series: list[Series] = field(default_factory=list)
    width: int = 640
    height: int = 420

    def add(self, label: str, xs, ys, dashed: bool = False) -> "Chart":
        self.series.append(Series(label, list(map(float, xs)), list(map(float, ys)), dashed))
        return self

    def _tx(self, v: float, log: bool) -> float | None:
        if not math.isfinite(v):
            return None
        if log:
            return math.log2(v) if v > 0 else None
        return v

    def to_element(self) -> ET.Element:
        margin_l, margin_r, margin_t, margin_b = 70, 150, 40, 55
        W, Hh = self.width, self.height
        pw, ph = W - margin_l - margin_r, Hh - margin_t - margin_b
        pts = []
        for s in self.series:
            cur = []
            for x, y in zip(s.xs, s.ys):
                tx, ty = self._tx(x, self.log2_x), self._tx(y, self.log2_y)
                if tx is not None and ty is not None:
                    cur.append((tx, ty))
            pts.append(cur)
        flat = [p for cur in pts for p in cur] or [(0.0, 0.0), (1.0, 1.0)]
        x0, x1 = min(p[0] for p in flat), max(p[0] for p in flat)
        y0, y1 = min(p[1] for p in flat), max(p[1] for p in flat)
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5

        def px(x: float) -> float:
            return margin_l + (x - x0) / (x1 - x0) * pw

        def py(y: float) -> float:
            return margin_t + ph - (y - y0) / (y1 - y0) * ph

        svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(W), height=str(Hh),
                         viewBox=f"0 0 {W} {Hh}")
        ET.SubElement(svg, "rect", x="0", y="0", width=str(W), height=str(Hh), fill="white")
        ET.SubElement(svg, "text", x=str(W / 2), y="22", attrib={"text-anchor": "middle", "font-size": "15",
                                                              "font-family": "sans-serif"}).text = self.title
        ET.SubElement(svg, "rect", x=str(margin_l), y=str(margin_t), width=str(pw), height=str(ph),
                      fill="none", stroke="#444")
        for i in range(5):
            fx = x0 + (x1 - x0) * i / 4
            fy = y0 + (y1 - y0) * i / 4
            ET.SubElement(svg, "text", x=f"{px(fx):.1f}", y=str(margin_t + ph + 16),
                          attrib={"text-anchor": "middle", "font-size": "11", "font-family": "sans-serif"}
                          ).text = _tick(fx, self.log2_x)
            ET.SubElement(svg, "text", x=str(margin_l - 6), y=f"{py(fy) + 4:.1f}",
                          attrib={"text-anchor": "end", "font-size": "11", "font-family": "sans-serif"}
                          ).text = _tick(fy, self.log2_y)
        ET.SubElement(svg, "text", x=str(margin_l + pw / 2), y=str(Hh - 12),
                      attrib={"text-anchor": "middle", "font-size": "13", "font-family": "sans-serif"}
                      ).text = self.xlabel
        ET.SubElement(svg, "text", x="16", y=str(margin_t + ph / 2),
                      attrib={"text-anchor": "middle", "font-size": "13", "font-family": "sans-serif",
                              "transform": f"rotate(-90 16 {margin_t + ph / 2})"}).text = self.ylabel
        for i, (s, cur) in enumerate(zip(self.series, pts)):
            color = PALETTE[i % len(PALETTE)]
            if cur:
                attrs = {"fill": "none", "stroke": color, "stroke-width": "1.8",
                         "points": " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in cur)}
                if s.dashed:
                    attrs["stroke-dasharray"] = "5,4"
                el = ET.SubElement(svg, "polyline", attrib=attrs)
                ET.SubElement(el, "title").text = s.label
            ly = margin_t + 14 + 18 * i
            ET.SubElement(svg, "line", x1=str(W - margin_r + 10), y1=str(ly - 4), x2=str(W - margin_r + 30),
                          y2=str(ly - 4), stroke=color, attrib={"stroke-width": "2"})
            ET.SubElement(svg, "text", x=str(W - margin_r + 35), y=str(ly),
                          attrib={"font-size": "11", "font-family": "sans-serif"}).text = s.label
        return svg

    def to_string(self) -> str:
        return ET.tostring(self.to_element(), encoding="unicode")

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text('<?xml version="1.0" encoding="UTF-8"?>\n' + self.to_string() + "\n")
        return path


def _tick(v: float, log: bool) -> str:
    return f"2^{v:.1f}" if log else f"{v:.3g}"


def slope_guide(xs: Sequence[float], anchor_y: float, slope: float) -> list[float]:
    """y values of a power law through (xs[0], anchor_y) with the given exponent."""
    x0 = float(xs[0])
    return [anchor_y * (float(x) / x0) ** slope for x in xs]
