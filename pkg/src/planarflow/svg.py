"""Deterministic SVG 1.1 rendering of curves in the upper half-plane."""

from xml.sax.saxutils import escape

import numpy as np

from .errors import ParameterError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


def _f(v):
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def autoscale_viewport(points, margin=0.05, include_axis=True):
    """(xmin, xmax, ymin, ymax) covering all points plus ``margin`` per side."""
    pts = np.concatenate([np.ravel(np.asarray(p, dtype=complex)) for p in points])
    pts = pts[np.isfinite(pts)]
    if pts.size == 0:
        raise ParameterError("nothing to draw")
    x0, x1 = pts.real.min(), pts.real.max()
    y0, y1 = pts.imag.min(), pts.imag.max()
    if include_axis:
        y0 = min(y0, 0.0)
    w, h = x1 - x0, y1 - y0
    w = w if w > 0 else max(abs(x0), 1.0)
    h = h if h > 0 else max(abs(y0), 1.0)
    return (x0 - margin * w, x1 + margin * w, y0 - margin * h, y1 + margin * h)


def render_svg(curves, viewport=None, style=None, points=None, width=640, height=480):
    """SVG document with one polyline per curve.

    ``curves`` is a sequence of complex arrays or a dict name -> array;
    ``points`` an optional array of complex markers.  ``style`` may set
    ``stroke_width``, ``colors`` and ``title``.
    """
    style = dict(style or {})
    if isinstance(curves, dict):
        names, arrs = list(curves), [np.asarray(curves[k], dtype=complex) for k in curves]
    else:
        arrs = [np.asarray(c, dtype=complex) for c in curves]
        names = [f"curve{i}" for i in range(len(arrs))]
    marks = np.asarray(points if points is not None else [], dtype=complex).ravel()
    if not any(a.size for a in arrs) and marks.size == 0:
        raise ParameterError("render_svg needs at least one curve or point")
    if viewport is None:
        viewport = autoscale_viewport([a for a in arrs] + [marks])
    xmin, xmax, ymin, ymax = viewport
    if not (xmax > xmin and ymax > ymin):
        raise ParameterError(f"degenerate viewport {viewport}")
    sx = width / (xmax - xmin)
    sy = height / (ymax - ymin)

    def px(z):
        return (z.real - xmin) * sx, (ymax - z.imag) * sy

    colors = style.get("colors", PALETTE)
    sw = style.get("stroke_width", 1.5)
    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">']
    if "title" in style:
        out.append(f"<title>{escape(str(style['title']))}</title>")
    # axes: the real line and the imaginary axis where visible
    if ymin <= 0 <= ymax:
        _, y = px(complex(xmin, 0))
        out.append(f'<line x1="{_f(0)}" y1="{_f(y)}" x2="{_f(width)}" y2="{_f(y)}" '
                   f'stroke="#888888" stroke-width="1"/>')
    if xmin <= 0 <= xmax:
        x, _ = px(complex(0, ymin))
        out.append(f'<line x1="{_f(x)}" y1="{_f(0)}" x2="{_f(x)}" y2="{_f(height)}" '
                   f'stroke="#cccccc" stroke-width="1"/>')
    for i, (name, a) in enumerate(zip(names, arrs)):
        a = a[np.isfinite(a)]
        if a.size == 0:
            continue
        coords = " ".join(f"{_f(x)},{_f(y)}" for x, y in zip(*px(a)))
        out.append(f'<polyline id="{name}" fill="none" stroke="{colors[i % len(colors)]}" '
                   f'stroke-width="{sw}" points="{coords}"/>')
    for z in marks[np.isfinite(marks)]:
        x, y = px(z)
        out.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="2.5" fill="#000000"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_loglog_svg(x, y, fit=None, width=480, height=360):
    """Log-log scatter with an optional fitted line (slope, intercept)."""
    x = np.log10(np.asarray(x, dtype=float))
    y = np.log10(np.asarray(y, dtype=float))
    pts = x + 1j * y
    curves = {"estimates": pts}
    if fit is not None:
        slope, icept = fit
        xx = np.array([x.min(), x.max()])
        curves["fit"] = xx + 1j * (slope * xx + icept / np.log(10))
    vp = autoscale_viewport(list(curves.values()), include_axis=False)
    return render_svg(curves, vp, points=pts, width=width, height=height)
