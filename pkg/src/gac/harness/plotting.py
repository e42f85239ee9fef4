"""Minimal SVG line charts of result CSVs.

One panel per measure, one polyline per sweep (the median over seeds), and
optionally two dashed polylines for lower and upper quantiles.
"""
import csv
import logging
import math
import warnings
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from ..exceptions import EmptyInputError

__all__ = ["emit_plot", "series_from_rows"]

log = logging.getLogger(__name__)

_COLORS = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d",
           "#666666"]


def series_from_rows(rows, measure, sweep_name=None, quantiles=(0.25, 0.75)):
    """``{sweep_name: (x, median, lower, upper, n_seeds)}`` for one measure."""
    groups = {}
    for r in rows:
        if r["measure"] != measure or (sweep_name and r["sweep_name"] != sweep_name):
            continue
        v = float(r["value"])
        if not math.isfinite(v):
            continue
        groups.setdefault(r["sweep_name"], {}).setdefault(float(r["sweep_value"]), []).append(v)
    out = {}
    for name, by_x in groups.items():
        xs = sorted(by_x)
        vals = [np.asarray(by_x[x]) for x in xs]
        out[name] = (
            np.array(xs),
            np.array([np.median(v) for v in vals]),
            np.array([np.quantile(v, quantiles[0]) for v in vals]),
            np.array([np.quantile(v, quantiles[1]) for v in vals]),
            min(len(v) for v in vals),
        )
    return out


def _scale(lo, hi, a, b, log_axis):
    if log_axis:
        lo, hi = math.log10(lo), math.log10(hi)
    span = hi - lo if hi > lo else 1.0

    def f(v):
        v = math.log10(v) if log_axis else v
        return a + (v - lo) / span * (b - a)

    return f


def _fmt(v):
    return f"{v:.4g}"


def emit_plot(csv_path, spec=None, out_path=None):
    """Write an SVG chart of ``csv_path``; returns the SVG text (and writes it if asked).

    ``spec`` keys: ``measures`` (default all), ``sweep_name``, ``x_log``,
    ``y_log``, ``bands`` (default True), ``quantiles`` (default [0.25, 0.75]),
    ``title``, ``width``, ``panel_height``.
    """
    spec = dict(spec or {})
    with open(csv_path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise EmptyInputError(f"{csv_path} has no result rows")
    measures = spec.get("measures") or list(dict.fromkeys(r["measure"] for r in rows))
    x_log, y_log = bool(spec.get("x_log")), bool(spec.get("y_log"))
    bands = spec.get("bands", True)
    q = tuple(spec.get("quantiles", (0.25, 0.75)))
    width = int(spec.get("width", 640))
    ph = int(spec.get("panel_height", 240))
    ml, mr, mt, mb = 70, 20, 30, 40
    title = spec.get("title", rows[0]["experiment"])

    panels = []
    warned = False
    for pi, measure in enumerate(measures):
        series = series_from_rows(rows, measure, spec.get("sweep_name"), q)
        lines = []
        for name, (x, med, lo, hi, n_seeds) in series.items():
            keep = np.ones(len(x), bool)
            if x_log:
                keep &= x > 0
            if y_log:
                keep &= (med > 0) & (lo > 0)
            if not keep.all():
                warnings.warn(f"{measure}/{name}: dropped nonpositive points on log axis")
            x, med, lo, hi = x[keep], med[keep], lo[keep], hi[keep]
            if len(x) == 0:
                continue
            show_band = bands and n_seeds > 1
            if bands and n_seeds <= 1 and not warned:
                warnings.warn("quantile bands need more than one seed; bands suppressed")
                log.warning("quantile bands suppressed: single seed")
                warned = True
            lines.append((name, x, med, (lo, hi) if show_band else None))
        if not lines:
            continue
        xs = np.concatenate([ln[1] for ln in lines])
        ys = np.concatenate([np.concatenate([ln[2]] + list(ln[3] or [])) for ln in lines])
        bounds = tuple(float(v) for v in (xs.min(), xs.max(), ys.min(), ys.max()))
        panels.append((measure, lines, bounds))
    if not panels:
        raise EmptyInputError("no plottable values for the requested measures")

    height = mt + len(panels) * (ph + mb) + 10
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="14">'
        f'{escape(title)}</text>',
    ]
    for pi, (measure, lines, (x0, x1, y0, y1)) in enumerate(panels):
        top = mt + pi * (ph + mb)
        bottom = top + ph - 10
        fx = _scale(x0, x1, ml, width - mr, x_log)
        fy = _scale(y0, y1, bottom, top + 10, y_log)
        out.append(
            f'<g class="panel" data-measure={quoteattr(measure)} data-x-min="{x0!r}" '
            f'data-x-max="{x1!r}" data-y-min="{y0!r}" data-y-max="{y1!r}" '
            f'data-x-log="{int(x_log)}" data-y-log="{int(y_log)}">'
        )
        out.append(f'<line x1="{ml}" y1="{bottom}" x2="{width - mr}" y2="{bottom}" '
                   'stroke="black"/>')
        out.append(f'<line x1="{ml}" y1="{top + 10}" x2="{ml}" y2="{bottom}" stroke="black"/>')
        out.append(f'<text x="{ml}" y="{bottom + 14}">{_fmt(x0)}</text>')
        out.append(f'<text x="{width - mr}" y="{bottom + 14}" text-anchor="end">'
                   f'{_fmt(x1)}</text>')
        out.append(f'<text x="{ml - 4}" y="{bottom}" text-anchor="end">{_fmt(y0)}</text>')
        out.append(f'<text x="{ml - 4}" y="{top + 14}" text-anchor="end">{_fmt(y1)}</text>')
        out.append(f'<text x="{ml + 4}" y="{top + 6}" font-weight="bold">'
                   f'{escape(measure)}</text>')
        for li, (name, x, med, band) in enumerate(lines):
            color = _COLORS[li % len(_COLORS)]

            def pts(ys):
                return " ".join(f"{fx(a):.2f},{fy(b):.2f}" for a, b in zip(x, ys))

            out.append(f'<polyline class="median" data-series={quoteattr(name)} fill="none" '
                       f'stroke="{color}" stroke-width="1.5" points="{pts(med)}"/>')
            if band is not None:
                for ys in band:
                    out.append(f'<polyline class="band" data-series={quoteattr(name)} '
                               f'fill="none" stroke="{color}" stroke-dasharray="3,3" '
                               f'points="{pts(ys)}"/>')
            out.append(f'<text x="{width - mr - 4}" y="{top + 20 + 12 * li}" '
                       f'text-anchor="end" fill="{color}">{escape(name)}</text>')
        out.append("</g>")
    out.append("</svg>")
    svg = "\n".join(out) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(svg)
    return svg
