"""Self-contained SVG rendering of training telemetry.

One SVG, four panels (train loss, test loss, sharpness, nuclear norm versus
step), one polyline per training mode.  Losses and the sharpness panel use a
log10 y-axis.  Output is built from formatted strings only, so identical
inputs produce byte-identical files.
"""

import math

PANEL_W = 360
PANEL_H = 260
MARGIN = 55
PAD = 18

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_PANELS = (
    ("train_loss", "train loss", True),
    ("test_loss", "test loss", True),
    ("paper_trace", "sharpness (trace)", True),
    ("nuclear_norm", "nuclear norm", False),
)

_LOG_FLOOR = 1e-16


def _fmt(x) -> str:
    return f"{x:.6g}"


def _ticks(lo, hi, count=5):
    if not math.isfinite(lo) or not math.isfinite(hi) or hi <= lo:
        return [lo] if math.isfinite(lo) else []
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


class _Panel:
    def __init__(self, x0, y0, title, logy):
        self.x0, self.y0, self.title, self.logy = x0, y0, title, logy
        self.series = []  # (label, xs, ys)

    def add(self, label, xs, ys):
        if self.logy:
            ys = [math.log10(max(v, _LOG_FLOOR)) for v in ys]
        self.series.append((label, list(xs), ys))

    def render(self, out):
        left = self.x0 + MARGIN
        top = self.y0 + PAD
        w = PANEL_W - MARGIN - PAD
        h = PANEL_H - MARGIN - PAD
        out.append(
            f'<rect x="{left}" y="{top}" width="{w}" height="{h}" '
            f'fill="none" stroke="black" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{left + w / 2:.1f}" y="{self.y0 + 14}" '
            f'text-anchor="middle" font-size="13">{self.title}'
            f'{" (log10)" if self.logy else ""}</text>'
        )
        finite = [
            (x, y)
            for _, xs, ys in self.series
            for x, y in zip(xs, ys)
            if math.isfinite(y)
        ]
        if not finite:
            return
        xs_all = [p[0] for p in finite]
        ys_all = [p[1] for p in finite]
        xlo, xhi = min(xs_all), max(xs_all)
        ylo, yhi = min(ys_all), max(ys_all)
        if xhi == xlo:
            xhi = xlo + 1.0
        if yhi == ylo:
            yhi = ylo + 1.0

        def px(x):
            return left + (x - xlo) / (xhi - xlo) * w

        def py(y):
            return top + h - (y - ylo) / (yhi - ylo) * h

        for t in _ticks(xlo, xhi, 4):
            out.append(
                f'<text x="{px(t):.1f}" y="{top + h + 16}" text-anchor="middle" '
                f'font-size="10">{_fmt(t)}</text>'
            )
        for t in _ticks(ylo, yhi, 5):
            out.append(
                f'<text x="{left - 6}" y="{py(t) + 3:.1f}" text-anchor="end" '
                f'font-size="10">{_fmt(t)}</text>'
            )
        out.append(
            f'<text x="{left + w / 2:.1f}" y="{top + h + 32}" '
            f'text-anchor="middle" font-size="11">step</text>'
        )
        for k, (label, xs, ys) in enumerate(self.series):
            color = _COLORS[k % len(_COLORS)]
            pts = " ".join(
                f"{px(x):.2f},{py(y):.2f}"
                for x, y in zip(xs, ys)
                if math.isfinite(y)
            )
            if pts:
                out.append(
                    f'<polyline points="{pts}" fill="none" stroke="{color}" '
                    f'stroke-width="1.5"/>'
                )
            ly = top + 14 + 14 * k
            out.append(
                f'<line x1="{left + 8}" y1="{ly}" x2="{left + 28}" y2="{ly}" '
                f'stroke="{color}" stroke-width="2"/>'
            )
            out.append(
                f'<text x="{left + 33}" y="{ly + 4}" font-size="11">{label}</text>'
            )


def render_runs(runs) -> str:
    """Render ``{mode: records}`` (RunLog record lists) to an SVG string."""
    width = 2 * PANEL_W + PAD
    height = 2 * PANEL_H + PAD
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}" '
        f'font-family="sans-serif">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for i, (column, title, logy) in enumerate(_PANELS):
        panel = _Panel(
            x0=(i % 2) * PANEL_W + PAD // 2,
            y0=(i // 2) * PANEL_H + PAD // 2,
            title=title,
            logy=logy,
        )
        for mode in sorted(runs):
            records = runs[mode]
            xs = [r.step for r in records]
            ys = [getattr(r, column) for r in records]
            panel.add(mode, xs, ys)
        panel.render(out)
    out.append("</svg>")
    return "\n".join(out) + "\n"
