"""Dependency-free SVG rendering for curves and heat grids.

Output is deterministic for identical input: coordinates are written with a
fixed number of decimals and elements are emitted in a fixed order.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .errors import ArgumentError
from .export import write_atomic

CURVE_KINDS = {
    "loss_curve": ("iteration", "loss"),
    "temperature_curve": ("iteration", "temperature"),
    "fitness_curve": ("generation", "fitness"),
}
KINDS = tuple(CURVE_KINDS) + ("heat_grid",)

MARGIN = (70, 30, 30, 50)  # left, right, top, bottom
N_TICKS = 5

# dark grey -> amber; luminance increases monotonically along the ramp
_RAMP_LO = np.array([40, 40, 40])
_RAMP_HI = np.array([255, 200, 20])


def _fmt(v):
    return f"{v:.2f}"


def _tick_label(v):
    return f"{v:.4g}"


def ramp_color(t):
    t = min(max(float(t), 0.0), 1.0)
    r, g, b = np.rint(_RAMP_LO + t * (_RAMP_HI - _RAMP_LO)).astype(int)
    return f"#{r:02x}{g:02x}{b:02x}"


def _curve_xy(data):
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 1:
        ys = arr
        xs = np.arange(arr.size, dtype=float)
    elif arr.ndim == 2 and arr.shape[1] == 2:
        xs, ys = arr[:, 0], arr[:, 1]
    else:
        raise ArgumentError("curve data must be a sequence of y values or (x, y) pairs")
    if xs.size == 0:
        raise ArgumentError("curve data is empty")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise ArgumentError("curve data contains non-finite values")
    return xs, ys


def _span(lo, hi):
    if hi == lo:
        pad = abs(lo) * 0.05 or 1.0
        return lo - pad, hi + pad
    return lo, hi


class _Frame:
    def __init__(self, width, height, xlim, ylim):
        self.width, self.height = width, height
        left, right, top, bottom = MARGIN
        self.x0, self.x1 = left, width - right
        self.y0, self.y1 = height - bottom, top  # data y grows upwards
        self.xlim, self.ylim = _span(*xlim), _span(*ylim)

    def sx(self, x):
        lo, hi = self.xlim
        return self.x0 + (x - lo) / (hi - lo) * (self.x1 - self.x0)

    def sy(self, y):
        lo, hi = self.ylim
        return self.y0 + (y - lo) / (hi - lo) * (self.y1 - self.y0)

    def axes(self, xlabel, ylabel):
        out = [
            f'<g class="axes" stroke="#000" stroke-width="1">'
            f'<line x1="{_fmt(self.x0)}" y1="{_fmt(self.y0)}" x2="{_fmt(self.x1)}" '
            f'y2="{_fmt(self.y0)}"/>'
            f'<line x1="{_fmt(self.x0)}" y1="{_fmt(self.y0)}" x2="{_fmt(self.x0)}" '
            f'y2="{_fmt(self.y1)}"/></g>',
            '<g class="ticks" font-family="sans-serif" font-size="11">',
        ]
        for v in np.linspace(*self.xlim, N_TICKS):
            x = self.sx(v)
            out.append(f'<line x1="{_fmt(x)}" y1="{_fmt(self.y0)}" x2="{_fmt(x)}" '
                       f'y2="{_fmt(self.y0 + 5)}" stroke="#000"/>')
            out.append(f'<text x="{_fmt(x)}" y="{_fmt(self.y0 + 18)}" '
                       f'text-anchor="middle">{escape(_tick_label(v))}</text>')
        for v in np.linspace(*self.ylim, N_TICKS):
            y = self.sy(v)
            out.append(f'<line x1="{_fmt(self.x0 - 5)}" y1="{_fmt(y)}" x2="{_fmt(self.x0)}" '
                       f'y2="{_fmt(y)}" stroke="#000"/>')
            out.append(f'<text x="{_fmt(self.x0 - 8)}" y="{_fmt(y + 4)}" '
                       f'text-anchor="end">{escape(_tick_label(v))}</text>')
        out.append("</g>")
        out.append(f'<text x="{_fmt((self.x0 + self.x1) / 2)}" y="{_fmt(self.height - 8)}" '
                   f'font-family="sans-serif" font-size="13" text-anchor="middle">'
                   f'{escape(xlabel)}</text>')
        out.append(f'<text x="14" y="{_fmt((self.y0 + self.y1) / 2)}" font-family="sans-serif" '
                   f'font-size="13" text-anchor="middle" transform="rotate(-90 14 '
                   f'{_fmt((self.y0 + self.y1) / 2)})">{escape(ylabel)}</text>')
        return out


def _document(width, height, body, title):
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" style="background-color:#fff">')
    return "\n".join([head, f"<title>{escape(title)}</title>", *body, "</svg>"]) + "\n"


def svg_text(kind, data, width=800, height=600, title=None, xlim=None, ylim=None):
    if kind not in KINDS:
        raise ArgumentError(f"unknown plot kind {kind!r}")
    title = title or kind.replace("_", " ")
    if kind == "heat_grid":
        return _heat_grid(data, width, height, title, xlim, ylim)
    xs, ys = _curve_xy(data)
    frame = _Frame(width, height, (xs.min(), xs.max()), (ys.min(), ys.max()))
    body = frame.axes(*CURVE_KINDS[kind])
    pts = " ".join(f"{_fmt(frame.sx(x))},{_fmt(frame.sy(y))}" for x, y in zip(xs, ys))
    body.append(f'<polyline fill="none" stroke="#1f4e79" stroke-width="1.5" points="{pts}"/>')
    return _document(width, height, body, title)


def _heat_grid(data, width, height, title, xlim, ylim):
    grid = np.asarray(data, dtype=float)
    if grid.ndim != 2 or grid.size == 0:
        raise ArgumentError("heat_grid data must be a non-empty 2-d array")
    if not np.all(np.isfinite(grid)):
        raise ArgumentError("heat_grid data contains non-finite values")
    ny, nx = grid.shape
    frame = _Frame(width, height, xlim or (0.0, float(nx)), ylim or (0.0, float(ny)))
    lo, hi = float(grid.min()), float(grid.max())
    cw = (frame.x1 - frame.x0) / nx
    ch = (frame.y0 - frame.y1) / ny
    body = ['<g class="cells">']
    for iy in range(ny):
        for ix in range(nx):
            t = (grid[iy, ix] - lo) / (hi - lo) if hi > lo else 0.0
            x = frame.x0 + ix * cw
            y = frame.y0 - (iy + 1) * ch  # row 0 at the bottom
            body.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(cw)}" '
                        f'height="{_fmt(ch)}" fill="{ramp_color(t)}"/>')
    body.append("</g>")
    body += frame.axes("x1", "x2")
    return _document(width, height, body, title)


def render_svg(kind, data, path, width=800, height=600, **kwargs):
    write_atomic(path, svg_text(kind, data, width, height, **kwargs))
