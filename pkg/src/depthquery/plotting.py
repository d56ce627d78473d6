"""Bird's-eye-view SVG plots of reference points against ground-truth centers.

Coordinates are ROI-normalized to [0, 1]; ego x (forward) points up the page,
ego y (left) points left.
"""

from __future__ import annotations

import numpy as np

from .geometry import RoiBounds, normalize_point

CANVAS = 600
MARGIN = 40
GT_HALF = 5.0
REF_RADIUS = 1.5


def _screen(n: np.ndarray) -> np.ndarray:
    """Normalized (x, y) -> SVG pixel (col, row)."""
    span = CANVAS - 2 * MARGIN
    col = MARGIN + (1.0 - n[:, 1]) * span
    row = MARGIN + (1.0 - n[:, 0]) * span
    return np.stack([col, row], axis=-1)


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def bev_svg(ref_points, gt_centers, roi: RoiBounds = RoiBounds(), title: str = "") -> str:
    refs = np.asarray(ref_points, dtype=float).reshape(-1, 3)
    gts = np.asarray(gt_centers, dtype=float).reshape(-1, 3)
    span = CANVAS - 2 * MARGIN
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{CANVAS}" viewBox="0 0 {CANVAS} {CANVAS}">',
        f'<rect x="0" y="0" width="{CANVAS}" height="{CANVAS}" fill="white"/>',
        f'<rect class="roi" x="{MARGIN}" y="{MARGIN}" width="{span}" height="{span}" fill="none" stroke="black"/>',
        f'<text x="{MARGIN}" y="{MARGIN - 12}" font-family="monospace" font-size="12">{title}</text>',
        f'<text x="{MARGIN}" y="{CANVAS - 12}" font-family="monospace" font-size="11">'
        f"normalized BEV: refs {len(refs)} (blue dots), gt {len(gts)} (red x)</text>",
    ]
    if len(refs):
        for col, row in _screen(normalize_point(refs, roi)[0]):
            lines.append(f'<circle class="ref" cx="{_fmt(col)}" cy="{_fmt(row)}" r="{REF_RADIUS}" fill="#1f5fbf"/>')
    if len(gts):
        h = GT_HALF
        for col, row in _screen(normalize_point(gts, roi)[0]):
            d = (
                f"M{_fmt(col - h)},{_fmt(row - h)}L{_fmt(col + h)},{_fmt(row + h)}"
                f"M{_fmt(col - h)},{_fmt(row + h)}L{_fmt(col + h)},{_fmt(row - h)}"
            )
            lines.append(f'<path class="gt" d="{d}" stroke="#c0271d" stroke-width="2"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def count_markers(svg: str) -> dict[str, int]:
    return {"gt": svg.count('class="gt"'), "ref": svg.count('class="ref"')}
