"""Minimal SVG scatter of real vs generated samples with 3-sigma mode circles."""
from __future__ import annotations

import numpy as np

from .data import GmmSpec


def scatter_svg(real: np.ndarray, gen: np.ndarray, spec: GmmSpec | None = None, size: int = 480, title: str = "") -> str:
    pts = [np.asarray(real, float).reshape(-1, 2), np.asarray(gen, float).reshape(-1, 2)]
    ref = pts[0] if len(pts[0]) else pts[1]
    if spec is not None:
        ref = np.vstack([ref, spec.means])
    lo = ref.min(axis=0)
    hi = ref.max(axis=0)
    pad = 0.1 * max(float((hi - lo).max()), 1e-9)
    lo, hi = lo - pad, hi + pad
    span = float((hi - lo).max())
    margin = 10

    def px(p):
        x = margin + (p[:, 0] - lo[0]) / span * (size - 2 * margin)
        y = size - margin - (p[:, 1] - lo[1]) / span * (size - 2 * margin)
        return x, y

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    if title:
        out.append(f'<title>{title}</title>')
    if spec is not None:
        r = 3 * spec.sigma / span * (size - 2 * margin)
        cx, cy = px(spec.means)
        out.append('<g id="modes" fill="none" stroke="#888" stroke-width="1">')
        out += [f'<circle cx="{a:.2f}" cy="{b:.2f}" r="{r:.2f}"/>' for a, b in zip(cx, cy)]
        out.append("</g>")
    # real: small blue dots; generated: orange crosses
    x, y = px(pts[0])
    out.append('<g id="real" fill="#1f77b4" fill-opacity="0.5">')
    out += [f'<circle cx="{a:.2f}" cy="{b:.2f}" r="1.5"/>' for a, b in zip(x, y)]
    out.append("</g>")
    x, y = px(pts[1])
    out.append('<g id="generated" stroke="#ff7f0e" stroke-width="1">')
    out += [
        f'<path d="M{a - 2:.2f},{b - 2:.2f}L{a + 2:.2f},{b + 2:.2f}M{a - 2:.2f},{b + 2:.2f}L{a + 2:.2f},{b - 2:.2f}"/>'
        for a, b in zip(x, y)
    ]
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
