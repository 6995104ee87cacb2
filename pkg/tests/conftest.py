import numpy as np
import pytest

from vesselflow import synth
from vesselflow.field import ScalarField2D


def render_tube(width, height, radius, angle, contrast=0.8, center=None, ramp_width=0.25):
    """One straight capsule through the image center (or the given point)."""
    if center is None:
        center = ((width - 1) / 2.0, (height - 1) / 2.0)
    cx, cy = center
    reach = float(np.hypot(width, height))
    dx, dy = np.cos(angle), np.sin(angle)
    seg = synth.Segment(cx - reach * dx, cy - reach * dy,
                        cx + reach * dx, cy + reach * dy, radius)
    image, mask = synth.render_segments([seg], width, height, contrast, ramp_width)
    return image, mask, seg


def render_step_edge(width, height, contrast=0.8, edge_x=None, ramp_half=0.75):
    """Bright half-plane with a wall ramp of the given half-width."""
    if edge_x is None:
        edge_x = (width - 1) / 2.0
    gx = np.arange(width, dtype=np.float64)[None, :].repeat(height, axis=0)
    vals = contrast * np.clip((gx - edge_x) / (2.0 * ramp_half) + 0.5, 0.0, 1.0)
    return ScalarField2D(vals)


def centerline_pixels(seg, width, height, margin=8):
    """Integer pixels lying on the segment axis, away from the image border."""
    n = int(seg.length) * 2 + 1
    ts = np.linspace(0.0, 1.0, n)
    xs = seg.x0 + ts * (seg.x1 - seg.x0)
    ys = seg.y0 + ts * (seg.y1 - seg.y0)
    pts = set()
    for x, y in zip(xs, ys):
        ix, iy = int(round(x)), int(round(y))
        if margin <= ix < width - margin and margin <= iy < height - margin:
            # keep only pixels essentially on the axis
            vx, vy = seg.x1 - seg.x0, seg.y1 - seg.y0
            ll = vx * vx + vy * vy
            s = ((ix - seg.x0) * vx + (iy - seg.y0) * vy) / ll
            px, py = seg.x0 + s * vx, seg.y0 + s * vy
            if np.hypot(ix - px, iy - py) <= 0.5:
                pts.add((ix, iy))
    return sorted(pts)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
