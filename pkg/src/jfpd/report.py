"""Deterministic output files: CSV tables, SVG plots, run manifests.

Everything here is byte-reproducible for fixed input: floats print with 17
significant digits (lossless for float64), SVG is hand-assembled with fixed
formatting, and all writes go through a temp-file-then-rename so partial
files never appear.
"""

import csv
import io
import os
import tempfile

import numpy as np


def write_bytes_atomic(path, blob):
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_text_atomic(path, text):
    return write_bytes_atomic(path, text.encode("utf-8"))


def format_value(v):
    """17-significant-digit floats; everything else via str()."""
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float) or isinstance(v, np.floating):
        return format(float(v), ".17g")
    return str(v)


def emit_csv(header, rows, path):
    """RFC-4180-style CSV with a header row and LF line endings."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return write_text_atomic(path, buf.getvalue())


def read_csv(path):
    """Parse back a CSV written by emit_csv: (header, rows of strings)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


# ---------------------------------------------------------------------------
# SVG plots
# ---------------------------------------------------------------------------

_SVG_W, _SVG_H = 640, 480
_MARGIN = 60


def _axis_range(values):
    lo, hi = float(min(values)), float(max(values))
    span = hi - lo
    if span == 0.0:
        span = max(abs(hi), 1.0)
    pad = 0.05 * span
    return lo - pad, hi + pad


def _scale(v, lo, hi, out_lo, out_hi):
    return out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)


def _svg_document(points, x_label, y_label, polyline):
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    if not all(np.isfinite(xs)) or not all(np.isfinite(ys)):
        raise ValueError("plot points must be finite")
    x_lo, x_hi = _axis_range(xs)
    y_lo, y_hi = _axis_range(ys)

    def px(x):
        return _scale(x, x_lo, x_hi, _MARGIN, _SVG_W - _MARGIN)

    def py(y):
        return _scale(y, y_lo, y_hi, _SVG_H - _MARGIN, _MARGIN)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<line x1="{_MARGIN}" y1="{_SVG_H - _MARGIN}" x2="{_SVG_W - _MARGIN}" '
        f'y2="{_SVG_H - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" '
        f'y2="{_SVG_H - _MARGIN}" stroke="black"/>',
        f'<text x="{_SVG_W // 2}" y="{_SVG_H - 15}" text-anchor="middle" '
        f'font-size="14">{x_label}</text>',
        f'<text x="18" y="{_SVG_H // 2}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 18 {_SVG_H // 2})">{y_label}</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        parts.append(
            f'<text x="{px(xv):.2f}" y="{_SVG_H - _MARGIN + 18}" text-anchor="middle" '
            f'font-size="11">{xv:.4g}</text>'
        )
        parts.append(
            f'<text x="{_MARGIN - 8}" y="{py(yv):.2f}" text-anchor="end" '
            f'font-size="11">{yv:.4g}</text>'
        )
    parts.append(
        f'<g class="data" data-xmin="{x_lo:.17g}" data-xmax="{x_hi:.17g}" '
        f'data-ymin="{y_lo:.17g}" data-ymax="{y_hi:.17g}">'
    )
    if polyline and len(points) > 1:
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in points)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="steelblue"/>')
    for x, y in points:
        parts.append(
            f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="4" fill="steelblue"/>'
        )
    parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_svg_scatter(points, x_label, y_label, path):
    """Standalone scatter SVG; byte-identical output for identical input."""
    points = [(float(x), float(y)) for x, y in points]
    if not points:
        raise ValueError("need at least one point")
    return write_text_atomic(path, _svg_document(points, x_label, y_label, False))


def emit_svg_line(points, x_label, y_label, path):
    """Line plot variant of emit_svg_scatter (points joined in order)."""
    points = [(float(x), float(y)) for x, y in points]
    if not points:
        raise ValueError("need at least one point")
    return write_text_atomic(path, _svg_document(points, x_label, y_label, True))


# ---------------------------------------------------------------------------
# run manifests
# ---------------------------------------------------------------------------

MANIFEST_NAME = "manifest.txt"


def write_manifest(path, command, config, seed, prng_reference, outputs, started, finished, extra=None):
    """Flat key=value manifest; enough to re-run the command bit-for-bit."""
    lines = [
        f"command={command}",
        f"seed={seed}",
        f"started_utc={started}",
        f"finished_utc={finished}",
        f"prng_reference={','.join(str(v) for v in prng_reference)}",
    ]
    from ._kernels import BACKEND

    lines.append(f"kernel_backend={BACKEND}")
    for key in sorted(config):
        lines.append(f"cfg.{key}={format_value(config[key])}")
    if extra:
        for key in sorted(extra):
            lines.append(f"{key}={format_value(extra[key])}")
    lines.append(f"outputs={','.join(outputs)}")
    return write_text_atomic(path, "\n".join(lines) + "\n")


def read_manifest(path):
    """Parse a manifest back into a flat dict (cfg.* keys kept prefixed)."""
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            key, _, value = line.partition("=")
            out[key] = value
    return out
