"""Small deterministic SVG plots: log-log exponent fits and slow-scale trajectories."""

from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np

from .errors import ConfigError

W, H = 640, 420
ML, MR, MT, MB = 70, 20, 30, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Axes:
    def __init__(self, x0, x1, y0, y1):
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1

    def px(self, x):
        return ML + (np.asarray(x) - self.x0) / (self.x1 - self.x0) * (W - ML - MR)

    def py(self, y):
        return H - MB - (np.asarray(y) - self.y0) / (self.y1 - self.y0) * (H - MT - MB)


def _frame(ax: _Axes, xlabel: str, ylabel: str, title: str, xticks, yticks) -> list[str]:
    out = [f'<rect x="{ML}" y="{MT}" width="{W - ML - MR}" height="{H - MT - MB}" fill="none" stroke="#000"/>',
           f'<text x="{W / 2:.1f}" y="{H - 10}" text-anchor="middle" font-size="13">{xlabel}</text>',
           f'<text x="15" y="{H / 2:.1f}" text-anchor="middle" font-size="13" '
           f'transform="rotate(-90 15 {H / 2:.1f})">{ylabel}</text>',
           f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-size="14">{title}</text>']
    for v, lab in xticks:
        x = float(ax.px(v))
        out.append(f'<line x1="{_fmt(x)}" y1="{H - MB}" x2="{_fmt(x)}" y2="{H - MB + 5}" stroke="#000"/>')
        out.append(f'<text x="{_fmt(x)}" y="{H - MB + 18}" text-anchor="middle" font-size="11">{lab}</text>')
    for v, lab in yticks:
        y = float(ax.py(v))
        out.append(f'<line x1="{ML - 5}" y1="{_fmt(y)}" x2="{ML}" y2="{_fmt(y)}" stroke="#000"/>')
        out.append(f'<text x="{ML - 8}" y="{_fmt(y + 4)}" text-anchor="end" font-size="11">{lab}</text>')
    return out


def _ticks(lo, hi, n=5, log=False):
    vals = np.linspace(lo, hi, n)
    return [(v, f"1e{v:.1f}" if log else f"{v:.3g}") for v in vals]


def _polyline(ax, x, y, color, width=1.5, dash=None) -> str:
    pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(ax.px(x), ax.py(y)))
    d = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{d}/>'


def _document(body: list[str], timestamp: bool) -> str:
    head = ['<?xml version="1.0" encoding="UTF-8"?>']
    if timestamp:
        head.append(f"<!-- generated {time.strftime('%Y-%m-%dT%H:%M:%SZ', time.gmtime())} -->")
    head.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">')
    head.append(f'<rect width="{W}" height="{H}" fill="#fff"/>')
    return "\n".join(head + body + ["</svg>"]) + "\n"


def exponent_svg(fit, timestamp: bool = True) -> str:
    d = np.abs(np.asarray(fit.lambda_grid, dtype=float) - fit.nu)
    rho = np.array([s.rho_prime for s in fit.samples], dtype=float)
    if len(d) == 0:
        raise ConfigError("empty grid: nothing to plot")
    lx, ly = np.log10(d), np.log10(rho)
    ax = _Axes(lx.min(), lx.max(), ly.min(), ly.max())
    body = _frame(ax, "log10 |lambda - nu|", "log10 rho'", f"exponent fit, {fit.side} of nu = {fit.nu:.10g}",
                  _ticks(ax.x0, ax.x1, log=True), _ticks(ax.y0, ax.y1, log=True))
    for a, b in zip(ax.px(lx), ax.py(ly)):
        body.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="3" fill="{COLORS[0]}"/>')
    xs = np.array([lx.min(), lx.max()])
    ys = fit.fitted_exponent * xs + math.log10(fit.fitted_C)
    body.append(_polyline(ax, xs, ys, COLORS[1]))
    note = (f"slope {fit.fitted_exponent:.3f} +- {fit.exponent_stderr:.3f} "
            f"(predicted {fit.predicted_exponent:.3f}), r2 = {fit.r_squared:.5f}")
    body.append(f'<text x="{ML + 10}" y="{MT + 18}" font-size="12">{note}</text>')
    return _document(body, timestamp)


def trajectory_svg(y, h, labels=("Re h1", "Re h2"), title="slow-scale trajectory", timestamp: bool = True) -> str:
    y = np.asarray(y, dtype=float)
    h = np.asarray(h)
    if len(y) == 0:
        raise ConfigError("empty trajectory: nothing to plot")
    curves = [h[:, 0].real, h[:, 1].real]
    lo = min(float(c.min()) for c in curves)
    hi = max(float(c.max()) for c in curves)
    pad = 0.05 * (hi - lo) if hi > lo else 0.5
    ax = _Axes(float(y[0]), float(y[-1]), lo - pad, hi + pad)
    body = _frame(ax, "y", "h", title, _ticks(ax.x0, ax.x1), _ticks(ax.y0, ax.y1))
    for i, (c, lab) in enumerate(zip(curves, labels)):
        body.append(_polyline(ax, y, c, COLORS[i]))
        body.append(f'<text x="{W - MR - 90}" y="{MT + 18 + 16 * i}" font-size="12" fill="{COLORS[i]}">{lab}</text>')
    return _document(body, timestamp)


def emit_svg(obj, path, timestamp: bool = True, **kw) -> Path:
    """Write an exponent fit (or a (y, h) trajectory tuple) as SVG."""
    text = trajectory_svg(*obj, timestamp=timestamp, **kw) if isinstance(obj, tuple) else exponent_svg(obj, timestamp)
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path
