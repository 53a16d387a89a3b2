"""Deterministic CSV writers, self-contained SVG plots and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["format_value", "write_csv", "Series", "svg_plot", "sha256_file", "RunManifest", "OutputSink"]


def format_value(v: Any) -> str:
    """Floats as repr (shortest round-trip), everything else as str."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: str | Path, columns: Sequence[str], rows: Sequence[dict | Sequence]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            vals = [r[c] for c in columns] if isinstance(r, dict) else list(r)
            w.writerow([format_value(v) for v in vals])
    return path


@dataclass
class Series:
    x: Sequence[float]
    y: Sequence[float]
    label: str = ""
    fit: bool = True


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        step = max(1, (b - a) // 6)
        return [float(e) for e in range(a, b + 1, step)]
    span = hi - lo or 1.0
    step = 10 ** math.floor(math.log10(span / 5))
    for m in (1, 2, 5, 10):
        if span / (m * step) <= 6:
            step *= m
            break
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def svg_plot(path: str | Path, series: Sequence[Series], title: str, xlabel: str, ylabel: str,
             logx: bool = True, logy: bool = True, reference_slope: float | None = None) -> Path:
    """Scatter plot with a least-squares line per series and the slope written beside it."""
    W, H, ml, mr, mt, mb = 640, 440, 80, 180, 40, 60
    pw, ph = W - ml - mr, H - mt - mb

    def tx(v):
        return np.log10(v) if logx else np.asarray(v, float)

    def ty(v):
        return np.log10(v) if logy else np.asarray(v, float)

    pts = []
    for s in series:
        x = np.asarray(s.x, float)
        y = np.asarray(s.y, float)
        ok = np.isfinite(x) & np.isfinite(y)
        if logx:
            ok &= x > 0
        if logy:
            ok &= y > 0
        pts.append((tx(x[ok]), ty(y[ok])))
    allx = np.concatenate([p[0] for p in pts]) if pts else np.zeros(0)
    ally = np.concatenate([p[1] for p in pts]) if pts else np.zeros(0)
    if allx.size == 0:
        allx, ally = np.array([0.0, 1.0]), np.array([0.0, 1.0])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 - x0 < 1e-12:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 0.5, y1 + 0.5
    padx, pady = 0.05 * (x1 - x0), 0.08 * (y1 - y0)
    x0, x1, y0, y1 = x0 - padx, x1 + padx, y0 - pady, y1 + pady

    def X(u):
        return ml + (u - x0) / (x1 - x0) * pw

    def Y(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
           'font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{ml + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1, logx):
        if x0 <= t <= x1:
            lab = f"1e{int(t)}" if logx else f"{t:g}"
            out.append(f'<line x1="{X(t):.1f}" y1="{mt + ph}" x2="{X(t):.1f}" y2="{mt + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{X(t):.1f}" y="{mt + ph + 18}" text-anchor="middle">{lab}</text>')
    for t in _ticks(y0, y1, logy):
        if y0 <= t <= y1:
            lab = f"1e{int(t)}" if logy else f"{t:g}"
            out.append(f'<line x1="{ml - 5}" y1="{Y(t):.1f}" x2="{ml}" y2="{Y(t):.1f}" stroke="black"/>')
            out.append(f'<text x="{ml - 8}" y="{Y(t) + 4:.1f}" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{H - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {mt + ph / 2:.1f})">{escape(ylabel)}</text>')
    ly = mt + 10
    for i, (s, (px, py)) in enumerate(zip(series, pts)):
        col = _COLORS[i % len(_COLORS)]
        for u, v in zip(px, py):
            out.append(f'<circle cx="{X(u):.2f}" cy="{Y(v):.2f}" r="3.5" fill="{col}"/>')
        text = s.label
        if s.fit and len(px) >= 2 and np.ptp(px) > 0:
            a, b = np.polyfit(px, py, 1)
            out.append(f'<line x1="{X(px.min()):.2f}" y1="{Y(a * px.min() + b):.2f}" x2="{X(px.max()):.2f}" '
                       f'y2="{Y(a * px.max() + b):.2f}" stroke="{col}" stroke-width="1.5"/>')
            text = f"{s.label} slope {a:.3f}".strip()
        out.append(f'<text x="{ml + pw + 10}" y="{ly}" fill="{col}">{escape(text)}</text>')
        ly += 16
    if reference_slope is not None:
        out.append(f'<text x="{ml + pw + 10}" y="{ly}">target {reference_slope:.3f}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    experiment: str
    config: dict
    version: str
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    status: str = "ok"
    error: str | None = None

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            if isinstance(v, np.generic):
                return clean(v.item())
            return v

        body = {
            "experiment": self.experiment,
            "version": self.version,
            "status": self.status,
            "error": self.error,
            "config": clean(self.config),
            "outputs": self.outputs,
            "timings": clean(self.timings),
            "summary": clean(self.summary),
        }
        return json.dumps(body, indent=2, sort_keys=False) + "\n"

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_json())
        return path


class OutputSink:
    """Tracks every file an experiment writes so the manifest can checksum them."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def register(self, p: str | Path) -> Path:
        p = Path(p)
        if p not in self.files:
            self.files.append(p)
        return p

    def csv(self, name: str, columns: Sequence[str], rows) -> Path:
        return self.register(write_csv(self.path(name), columns, rows))

    def plot(self, name: str, series: Sequence[Series], title: str, xlabel: str, ylabel: str, **kw) -> Path:
        return self.register(svg_plot(self.path(name), series, title, xlabel, ylabel, **kw))

    def checksums(self) -> dict:
        return {str(p.relative_to(self.root)): sha256_file(p) for p in self.files if p.exists()}
