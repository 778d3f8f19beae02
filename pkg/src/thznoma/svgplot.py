"""Minimal BER-vs-SNR line charts as standalone SVG."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

BER_FLOOR = 1e-9
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
           "#17becf", "#7f7f7f", "#bcbd22")
_DASHES = ("", "6,3", "2,3", "8,3,2,3")


def render(records, title: str = "") -> str:
    """One polyline per (detector, stream) on a log BER axis.

    Zero-BER points are drawn at ``BER_FLOOR`` with a hollow marker.
    """
    series: dict = {}
    for r in records:
        series.setdefault((r.detector, r.stream), []).append((r.snr_db, r.ber))
    if not series:
        raise ValueError("no data rows to plot")
    W, H, L, R, T, B = 720, 480, 70, 170, 40, 50
    xs = [x for pts in series.values() for x, _ in pts]
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 = x0 + 1.0
    ys = [max(y, BER_FLOOR) for pts in series.values() for _, y in pts]
    d0 = math.floor(math.log10(min(ys)))
    d1 = max(0, math.ceil(math.log10(max(ys))))
    if d1 == d0:
        d0 -= 1

    def px(x):
        return L + (x - x0) / (x1 - x0) * (W - L - R)

    def py(y):
        return T + (d1 - math.log10(max(y, BER_FLOOR))) / (d1 - d0) * (H - T - B)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
           f'<rect width="{W}" height="{H}" fill="white"/>']
    if title:
        out.append(f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
                   f'{escape(title)}</text>')
    for d in range(d0, d1 + 1):
        y = py(10.0 ** d)
        out.append(f'<line x1="{L}" y1="{y:.1f}" x2="{W - R}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{L - 6}" y="{y + 4:.1f}" text-anchor="end">1e{d}</text>')
    for k in range(6):
        x = x0 + k * (x1 - x0) / 5
        out.append(f'<text x="{px(x):.1f}" y="{H - B + 16}" text-anchor="middle">{x:g}</text>')
    out.append(f'<rect x="{L}" y="{T}" width="{W - L - R}" height="{H - T - B}" '
               'fill="none" stroke="black"/>')
    out.append(f'<text x="{(L + W - R) / 2:.1f}" y="{H - 12}" text-anchor="middle">SNR (dB)</text>')
    out.append(f'<text x="16" y="{(T + H - B) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(T + H - B) / 2:.1f})">BER</text>')
    detectors = sorted({d for d, _ in series})
    streams = sorted({s for _, s in series})
    for n, ((det, st), pts) in enumerate(sorted(series.items())):
        pts = sorted(pts)
        color = _COLORS[detectors.index(det) % len(_COLORS)]
        dash = _DASHES[streams.index(st) % len(_DASHES)]
        coords = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in pts)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"{dash_attr}/>')
        for x, y in pts:
            fill = "white" if y <= 0 else color
            out.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="2.5" fill="{fill}" '
                       f'stroke="{color}"/>')
        ly = T + 14 * n + 8
        out.append(f'<line x1="{W - R + 10}" y1="{ly}" x2="{W - R + 34}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="1.5"{dash_attr}/>')
        out.append(f'<text x="{W - R + 40}" y="{ly + 4}">{escape(det)} stream {st}</text>')
    out.append(f'<text x="{W - R + 10}" y="{H - B}" font-size="9">hollow: no errors '
               f'(drawn at {BER_FLOOR:g})</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
