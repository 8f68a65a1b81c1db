"""Result assembly: overlap graph, loess trend smoothing, CSV/SVG exports with
a hashed file manifest. Every export is a pure function of its inputs, so
re-running on identical inputs yields byte-identical files."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


@dataclass
class OverlapGraph:
    nodes: dict[str, int]
    edges: dict[tuple[str, str], int]


def overlap_graph(partitions: Mapping[str, set]) -> OverlapGraph:
    """Node sizes are set sizes; edges are pairwise intersection sizes."""
    names = sorted(partitions)
    nodes = {name: len(partitions[name]) for name in names}
    edges = {}
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            edges[(a, b)] = len(partitions[a] & partitions[b])
    return OverlapGraph(nodes=nodes, edges=edges)


@dataclass
class TrendSeries:
    x: np.ndarray
    y: np.ndarray
    smoothed_x: np.ndarray
    smoothed_y: np.ndarray
    span: float


def loess_smooth(
    points: Sequence[tuple[float, float]] | np.ndarray,
    span: float = 0.75,
    degree: int = 1,
    grid: Sequence[float] | None = None,
) -> TrendSeries:
    """Locally weighted linear regression with tricube weights.

    At each grid point the ceil(span*n) nearest points get weight
    (1 - (d/d_max)^3)^3 and a degree-1 weighted fit is evaluated there.
    """
    if degree != 1:
        raise ValueError("only degree-1 local fits are supported")
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (n, 2)")
    n = pts.shape[0]
    if n < 3:
        raise ValueError("need at least 3 points")
    if not 0 < span <= 1:
        raise ValueError("span must be in (0, 1]")
    r = math.ceil(span * n)
    if r < 2:
        raise ValueError(f"span {span} covers fewer than 2 of {n} points")
    order = np.argsort(pts[:, 0], kind="stable")
    x = pts[order, 0]
    y = pts[order, 1]
    if grid is None:
        gx = x
    else:
        gx = np.asarray(sorted(grid), dtype=np.float64)
        if gx.size and (gx[0] < x[0] or gx[-1] > x[-1]):
            raise ValueError("grid extends beyond the input x-range")
    fitted = np.empty_like(gx)
    for i, x0 in enumerate(gx):
        d = np.abs(x - x0)
        d_max = np.partition(d, r - 1)[r - 1]
        if d_max == 0:
            w = (d == 0).astype(np.float64)
        else:
            u = np.clip(d / d_max, 0.0, 1.0)
            w = (1.0 - u**3) ** 3
        # Center on the evaluation point; the intercept is the fit there.
        z = x - x0
        sw = w.sum()
        swz = (w * z).sum()
        swzz = (w * z * z).sum()
        swy = (w * y).sum()
        swzy = (w * z * y).sum()
        det = sw * swzz - swz * swz
        if det <= 0 or swzz == 0:
            fitted[i] = swy / sw
        else:
            fitted[i] = (swzz * swy - swz * swzy) / det
    if not np.isfinite(fitted).all():
        raise FloatingPointError("loess produced non-finite values")
    return TrendSeries(x=x, y=y, smoothed_x=gx, smoothed_y=fitted, span=span)


# -- SVG (minimal static renderings) ---------------------------------------

_SVG_W, _SVG_H, _SVG_PAD = 640, 360, 48


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _scale(values: np.ndarray, lo_px: float, hi_px: float) -> np.ndarray:
    vmin, vmax = float(np.min(values)), float(np.max(values))
    if vmax == vmin:
        return np.full_like(values, (lo_px + hi_px) / 2.0)
    return lo_px + (values - vmin) * (hi_px - lo_px) / (vmax - vmin)


def _polyline(xs: np.ndarray, ys: np.ndarray, stroke: str, width: float = 1.5) -> str:
    pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(xs, ys))
    return f'<polyline fill="none" stroke="{stroke}" stroke-width="{width}" points="{pts}"/>'


def line_chart_svg(series: Sequence[tuple[str, np.ndarray, np.ndarray]], title: str) -> str:
    """Fixed-size chart with one polyline per (label, x, y) series."""
    palette = ("#888888", "#1f77b4", "#d62728", "#2ca02c", "#9467bd")
    all_x = np.concatenate([np.asarray(s[1], dtype=np.float64) for s in series])
    all_y = np.concatenate([np.asarray(s[2], dtype=np.float64) for s in series])
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_SVG_W}" height="{_SVG_H}">',
        f'<text x="{_SVG_W // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{_SVG_PAD}" y1="{_SVG_H - _SVG_PAD}" x2="{_SVG_W - _SVG_PAD}" '
        f'y2="{_SVG_H - _SVG_PAD}" stroke="#000"/>',
        f'<line x1="{_SVG_PAD}" y1="{_SVG_PAD}" x2="{_SVG_PAD}" y2="{_SVG_H - _SVG_PAD}" stroke="#000"/>',
        f'<text x="{_SVG_PAD}" y="{_SVG_H - _SVG_PAD + 16}" font-size="10">{_fmt(float(all_x.min()))}</text>',
        f'<text x="{_SVG_W - _SVG_PAD}" y="{_SVG_H - _SVG_PAD + 16}" text-anchor="end" font-size="10">'
        f"{_fmt(float(all_x.max()))}</text>",
        f'<text x="{_SVG_PAD - 4}" y="{_SVG_H - _SVG_PAD}" text-anchor="end" font-size="10">'
        f"{_fmt(float(all_y.min()))}</text>",
        f'<text x="{_SVG_PAD - 4}" y="{_SVG_PAD + 4}" text-anchor="end" font-size="10">'
        f"{_fmt(float(all_y.max()))}</text>",
    ]
    xmin, xmax = float(all_x.min()), float(all_x.max())
    ymin, ymax = float(all_y.min()), float(all_y.max())
    def px(xs):
        xs = np.asarray(xs, dtype=np.float64)
        if xmax == xmin:
            return np.full_like(xs, (_SVG_PAD + _SVG_W - _SVG_PAD) / 2.0)
        return _SVG_PAD + (xs - xmin) * (_SVG_W - 2 * _SVG_PAD) / (xmax - xmin)
    def py(ys):
        ys = np.asarray(ys, dtype=np.float64)
        if ymax == ymin:
            return np.full_like(ys, _SVG_H / 2.0)
        return (_SVG_H - _SVG_PAD) - (ys - ymin) * (_SVG_H - 2 * _SVG_PAD) / (ymax - ymin)
    for i, (label, xs, ys) in enumerate(series):
        color = palette[i % len(palette)]
        parts.append(_polyline(px(xs), py(ys), color))
        parts.append(
            f'<text x="{_SVG_W - _SVG_PAD}" y="{_SVG_PAD + 14 * (i + 1)}" text-anchor="end" '
            f'font-size="11" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def overlap_graph_svg(graph: OverlapGraph, title: str = "theory overlap") -> str:
    """Circle layout; node radius tracks sqrt(count), edge width tracks overlap."""
    names = sorted(graph.nodes)
    cx, cy, ring = _SVG_W / 2, _SVG_H / 2, min(_SVG_W, _SVG_H) / 2 - 70
    pos = {}
    for i, name in enumerate(names):
        angle = 2 * math.pi * i / max(len(names), 1) - math.pi / 2
        pos[name] = (cx + ring * math.cos(angle), cy + ring * math.sin(angle))
    max_node = max(graph.nodes.values()) if graph.nodes else 1
    max_edge = max(graph.edges.values()) if graph.edges else 1
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_SVG_W}" height="{_SVG_H}">',
        f'<text x="{_SVG_W // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for (a, b), count in sorted(graph.edges.items()):
        if count == 0:
            continue
        width = 0.5 + 7.5 * count / max(max_edge, 1)
        (x1, y1), (x2, y2) = pos[a], pos[b]
        parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="#999999" stroke-width="{_fmt(width)}"/>'
        )
    for name in names:
        x, y = pos[name]
        radius = 6 + 28 * math.sqrt(graph.nodes[name] / max(max_node, 1))
        parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(radius)}" fill="#1f77b4" fill-opacity="0.6"/>'
        )
        parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y + 4)}" text-anchor="middle" font-size="11">'
            f"{name} ({graph.nodes[name]})</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# -- export ------------------------------------------------------------------


@dataclass
class ManifestEntry:
    file: str
    sha256: str
    rows: int


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "files": [
                {"file": e.file, "sha256": e.sha256, "rows": e.rows}
                for e in sorted(self.entries, key=lambda e: e.file)
            ]
        }


def misinfo_percentage(misinfo_count: int, total_count: int) -> float:
    """Share of a theory's tweets classified as misinformation, in percent."""
    if total_count == 0:
        return 0.0
    return 100.0 * misinfo_count / total_count


class ReportWriter:
    """Accumulates artifact files under one directory plus a manifest."""

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = Manifest()

    def _register(self, name: str) -> None:
        data = (self.out_dir / name).read_bytes()
        rows = 0
        if name.endswith(".csv"):
            rows = max(data.decode("utf-8").count("\n") - 1, 0)
        self.manifest.entries.append(
            ManifestEntry(file=name, sha256=hashlib.sha256(data).hexdigest(), rows=rows)
        )

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
        with open(self.out_dir / name, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow(row)
        self._register(name)

    def write_text(self, name: str, text: str) -> None:
        (self.out_dir / name).write_text(text, encoding="utf-8")
        self._register(name)

    def write_json(self, name: str, payload) -> None:
        self.write_text(name, json.dumps(payload, sort_keys=True, indent=2) + "\n")

    def finish(self) -> Manifest:
        payload = json.dumps(self.manifest.as_dict(), sort_keys=True, indent=2) + "\n"
        (self.out_dir / "manifest.json").write_text(payload, encoding="utf-8")
        return self.manifest
