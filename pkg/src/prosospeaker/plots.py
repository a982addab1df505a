"""Minimal static SVG emitters for ROC curves, bar charts and heatmaps."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

W, H = 420, 420
PAD = 50


def _doc(body: list, width=W, height=H) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body,
                      "</svg>"]) + "\n"


def _axes(title, xlabel, ylabel, width=W, height=H) -> list:
    x0, y0, x1, y1 = PAD, height - PAD, width - 20, 30
    return [
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.1f}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {(y0 + y1) / 2:.1f})">{escape(ylabel)}</text>',
    ]


def roc_svg(curves: dict, title: str = "ROC") -> str:
    """``curves`` maps a legend label to an (fpr, tpr) pair."""
    x0, y0, x1, y1 = PAD, H - PAD, W - 20, 30
    body = _axes(title, "false positive rate", "true positive rate")
    body.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="#bbb" stroke-dasharray="4"/>')
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
    for i, (label, (fpr, tpr)) in enumerate(curves.items()):
        px = x0 + np.asarray(fpr) * (x1 - x0)
        py = y0 - np.asarray(tpr) * (y0 - y1)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        c = colors[i % len(colors)]
        body.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="2"/>')
        body.append(f'<text x="{x1 - 150}" y="{y0 - 15 - 16 * i}" fill="{c}">{escape(label)}</text>')
    return _doc(body)


def bar_svg(labels, values, title: str = "", ylabel: str = "", vmax: float = 1.0) -> str:
    x0, y0, x1, y1 = PAD, H - PAD, W - 20, 30
    body = _axes(title, "", ylabel)
    n = max(len(labels), 1)
    slot = (x1 - x0) / n
    for i, (lab, v) in enumerate(zip(labels, values)):
        h = (y0 - y1) * max(0.0, min(float(v), vmax)) / vmax
        x = x0 + i * slot + 0.15 * slot
        body.append(f'<rect x="{x:.2f}" y="{y0 - h:.2f}" width="{0.7 * slot:.2f}" '
                    f'height="{h:.2f}" fill="#4c72b0"/>')
        body.append(f'<text x="{x + 0.35 * slot:.2f}" y="{y0 + 14}" text-anchor="middle">'
                    f'{escape(str(lab))}</text>')
        body.append(f'<text x="{x + 0.35 * slot:.2f}" y="{y0 - h - 4:.2f}" '
                    f'text-anchor="middle">{float(v):.3f}</text>')
    return _doc(body)


def _block_mean(M, k: int):
    """Average non-overlapping k x k blocks (edge blocks may be smaller)."""
    rows = np.add.reduceat(M, np.arange(0, M.shape[0], k), axis=0)
    rows /= np.diff(np.r_[np.arange(0, M.shape[0], k), M.shape[0]])[:, None]
    out = np.add.reduceat(rows, np.arange(0, M.shape[1], k), axis=1)
    return out / np.diff(np.r_[np.arange(0, M.shape[1], k), M.shape[1]])[None, :]


def heatmap_svg(M, title: str = "", split: int | None = None, size: int = 480,
                max_cells: int = 80) -> str:
    """Diverging blue-white-red map of a matrix with values in [-1, 1].

    Matrices wider than ``max_cells`` are block-averaged first to keep the file small.
    """
    M = np.asarray(M, dtype=np.float64)
    k = -(-max(M.shape) // max_cells)
    if k > 1:
        M = _block_mean(M, k)
        split = None if split is None else split / k
    n_r, n_c = M.shape
    cell = (size - 2 * PAD) / max(n_r, n_c)
    body = [f'<text x="{size / 2:.1f}" y="18" text-anchor="middle">{escape(title)}</text>']
    v = np.clip(M, -1.0, 1.0)
    r = np.where(v > 0, 255, np.round(255 * (1 + v))).astype(int)
    b = np.where(v < 0, 255, np.round(255 * (1 - v))).astype(int)
    g = np.round(255 * (1 - np.abs(v))).astype(int)
    for i in range(n_r):
        for j in range(n_c):
            body.append(f'<rect x="{PAD + j * cell:.2f}" y="{PAD + i * cell:.2f}" '
                        f'width="{cell:.3f}" height="{cell:.3f}" '
                        f'fill="rgb({r[i, j]},{g[i, j]},{b[i, j]})"/>')
    if split is not None:
        s = PAD + split * cell
        end = PAD + n_c * cell
        body.append(f'<line x1="{s:.2f}" y1="{PAD}" x2="{s:.2f}" y2="{end:.2f}" stroke="black"/>')
        body.append(f'<line x1="{PAD}" y1="{s:.2f}" x2="{end:.2f}" y2="{s:.2f}" stroke="black"/>')
    return _doc(body, size, size)
