"""Seedable 2D vascular-tree scenes with ground truth.

Trees are unions of straight capsules (all points within radius r of a
segment's axis) grown by recursive binary branching. Rendering uses the same
ramped profile as the matching template, bright vessels on a dark background;
a branch point is recorded with an axis-aligned bounding box centered on it.
"""

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import ScalarField2D
from .template import ramp_profile


@dataclass(frozen=True)
class Segment:
    x0: float
    y0: float
    x1: float
    y1: float
    radius: float

    @property
    def length(self) -> float:
        return float(np.hypot(self.x1 - self.x0, self.y1 - self.y0))

    @property
    def angle(self) -> float:
        return float(np.arctan2(self.y1 - self.y0, self.x1 - self.x0))


@dataclass(frozen=True)
class BifurcationBox:
    cx: float
    cy: float
    half: float


@dataclass(frozen=True)
class SceneConfig:
    width: int = 96
    height: int = 96
    root_radius: float = 5.0
    radius_decay: float = 0.78
    branch_angle_range: tuple[float, float] = (25.0, 50.0)  # degrees
    min_radius: float = 1.2
    max_depth: int = 5
    contrast: float = 0.8
    seed: int = 0
    ramp_width: float = 0.25  # wall softness, in radius units (matches the template)

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ValueError("scene dimensions too small")
        if not 0.0 < self.radius_decay < 1.0:
            raise ValueError("radius_decay must lie in (0, 1)")
        if self.min_radius >= self.root_radius:
            raise ValueError("min_radius must be below root_radius")
        if not 0.0 < self.contrast <= 1.0:
            raise ValueError("contrast must lie in (0, 1]")
        lo, hi = self.branch_angle_range
        if not 0.0 < lo <= hi < 90.0:
            raise ValueError("branch angles must satisfy 0 < min <= max < 90 degrees")
        if self.max_depth < 0:
            raise ValueError("max_depth must be nonnegative")


@dataclass
class SyntheticScene:
    image: ScalarField2D
    mask: np.ndarray  # bool (H, W); True inside a capsule
    segments: list[Segment]
    bifurcation_boxes: list[BifurcationBox]
    config: SceneConfig = dc_field(repr=False, default=None)


def _segment_distance_patch(seg: Segment, width, height, reach):
    """Distances to the segment axis over its inflated bounding box."""
    x_lo = max(0, int(np.floor(min(seg.x0, seg.x1) - reach)))
    x_hi = min(width - 1, int(np.ceil(max(seg.x0, seg.x1) + reach)))
    y_lo = max(0, int(np.floor(min(seg.y0, seg.y1) - reach)))
    y_hi = min(height - 1, int(np.ceil(max(seg.y0, seg.y1) + reach)))
    if x_lo > x_hi or y_lo > y_hi:
        return None
    gy, gx = np.mgrid[y_lo : y_hi + 1, x_lo : x_hi + 1]
    vx = seg.x1 - seg.x0
    vy = seg.y1 - seg.y0
    ll = vx * vx + vy * vy
    if ll == 0.0:
        dist = np.hypot(gx - seg.x0, gy - seg.y0)
    else:
        s = np.clip(((gx - seg.x0) * vx + (gy - seg.y0) * vy) / ll, 0.0, 1.0)
        dist = np.hypot(gx - (seg.x0 + s * vx), gy - (seg.y0 + s * vy))
    return (slice(y_lo, y_hi + 1), slice(x_lo, x_hi + 1)), dist


def render_segments(segments, width: int, height: int, contrast: float,
                    ramp_width: float = 0.25) -> tuple[ScalarField2D, np.ndarray]:
    """Rasterize capsules: intensity = contrast * ramped profile (combined by
    max), mask = within distance r of some axis. Returns (image, mask)."""
    img = np.zeros((height, width), dtype=np.float64)
    mask = np.zeros((height, width), dtype=bool)
    for seg in segments:
        reach = seg.radius * (1.0 + ramp_width) + 1.0
        got = _segment_distance_patch(seg, width, height, reach)
        if got is None:
            continue
        window, dist = got
        np.maximum(img[window], contrast * ramp_profile(dist / seg.radius, ramp_width),
                   out=img[window])
        mask[window] |= dist <= seg.radius
    return ScalarField2D(np.clip(img, 0.0, 1.0)), mask


def generate_tree(cfg: SceneConfig) -> SyntheticScene:
    """Grow a binary tree of capsules, deterministic for a given seed.

    Each branch point spawns two children at radius r * decay, one deflected
    left and one right by angles drawn from branch_angle_range; recursion
    stops at min_radius or max_depth. Headings that would leave the frame are
    re-aimed at the image center before the segment is laid down.
    """
    rng = np.random.default_rng(cfg.seed)
    w, h = cfg.width, cfg.height
    margin = cfg.root_radius + 2.0
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0

    ring = 0.38 * min(w, h)
    a0 = rng.uniform(0.0, 2.0 * np.pi)
    start = np.array([cx + ring * np.cos(a0), cy + ring * np.sin(a0)])
    heading = np.arctan2(cy - start[1], cx - start[0]) + rng.uniform(-0.3, 0.3)

    seg_len_lo = 0.14 * min(w, h)
    seg_len_hi = 0.20 * min(w, h)
    ang_lo, ang_hi = np.deg2rad(cfg.branch_angle_range[0]), np.deg2rad(cfg.branch_angle_range[1])

    segments: list[Segment] = []
    boxes: list[BifurcationBox] = []

    def inside(pt):
        return margin <= pt[0] <= w - 1 - margin and margin <= pt[1] <= h - 1 - margin

    def grow(pos, angle, radius, depth):
        length = rng.uniform(seg_len_lo, seg_len_hi)
        end = pos + length * np.array([np.cos(angle), np.sin(angle)])
        if not inside(end):
            angle = np.arctan2(cy - pos[1], cx - pos[0]) + rng.uniform(-0.25, 0.25)
            end = pos + length * np.array([np.cos(angle), np.sin(angle)])
            end[0] = np.clip(end[0], margin, w - 1 - margin)
            end[1] = np.clip(end[1], margin, h - 1 - margin)
        segments.append(Segment(float(pos[0]), float(pos[1]), float(end[0]), float(end[1]),
                                float(radius)))
        child_radius = radius * cfg.radius_decay
        if depth >= cfg.max_depth or child_radius < cfg.min_radius:
            return
        boxes.append(BifurcationBox(float(end[0]), float(end[1]),
                                    float(rng.uniform(4.0, 6.0) * radius / 2.0)))
        left = rng.uniform(ang_lo, ang_hi)
        right = rng.uniform(ang_lo, ang_hi)
        grow(end, angle + left, child_radius, depth + 1)
        grow(end, angle - right, child_radius, depth + 1)

    grow(start, heading, cfg.root_radius, 0)
    image, mask = render_segments(segments, w, h, cfg.contrast, cfg.ramp_width)
    return SyntheticScene(image=image, mask=mask, segments=segments,
                          bifurcation_boxes=boxes, config=cfg)


def add_gaussian_noise(image: ScalarField2D, sigma: float, seed: int) -> ScalarField2D:
    """Add zero-mean Gaussian pixel noise and clamp back into [0, 1]."""
    if sigma < 0:
        raise ValueError("noise sigma must be nonnegative")
    if sigma == 0.0:
        return image
    rng = np.random.default_rng(seed)
    noisy = image.data + rng.normal(0.0, sigma, size=image.data.shape)
    return ScalarField2D(np.clip(noisy, 0.0, 1.0))


def add_blobs(image: ScalarField2D, count: int, radius: float, contrast: float,
              seed: int, keepout: np.ndarray | None = None) -> tuple[ScalarField2D, np.ndarray]:
    """Scatter small isolated bright disks (degenerate capsules) for clutter
    experiments. Returns (image, blob mask). Positions avoid the keepout mask."""
    rng = np.random.default_rng(seed)
    h, w = image.data.shape
    img = image.data.copy()
    blob_mask = np.zeros((h, w), dtype=bool)
    placed = 0
    attempts = 0
    while placed < count and attempts < count * 50:
        attempts += 1
        x = rng.uniform(3 * radius, w - 1 - 3 * radius)
        y = rng.uniform(3 * radius, h - 1 - 3 * radius)
        if keepout is not None and keepout[int(round(y)), int(round(x))]:
            continue
        seg = Segment(x, y, x, y, radius)
        got = _segment_distance_patch(seg, w, h, radius * 1.25 + 1.0)
        if got is None:
            continue
        window, dist = got
        np.maximum(img[window], contrast * ramp_profile(dist / radius, 0.25),
                   out=img[window])
        blob_mask[window] |= dist <= radius
        placed += 1
    return ScalarField2D(np.clip(img, 0.0, 1.0)), blob_mask


def save_scene(scene: SyntheticScene, out_dir, image: ScalarField2D | None = None) -> None:
    """Write image.pgm, mask.pgm, segments.json and bifurc_boxes.json.

    An explicit image (e.g. a noisy or inverted variant) replaces the clean
    rendering in image.pgm; ground truth files always come from the scene.
    """
    from pathlib import Path

    from .field import write_pgm

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_pgm(scene.image if image is None else image, out / "image.pgm")
    write_pgm(ScalarField2D(scene.mask.astype(np.float64)), out / "mask.pgm")
    segs = [{"x0": s.x0, "y0": s.y0, "x1": s.x1, "y1": s.y1, "r": s.radius}
            for s in scene.segments]
    boxes = [{"cx": b.cx, "cy": b.cy, "half": b.half} for b in scene.bifurcation_boxes]
    (out / "segments.json").write_text(json.dumps(segs, sort_keys=True) + "\n")
    (out / "bifurc_boxes.json").write_text(json.dumps(boxes, sort_keys=True) + "\n")


def load_boxes(path) -> list[BifurcationBox]:
    raw = json.loads(open(path).read())
    return [BifurcationBox(b["cx"], b["cy"], b["half"]) for b in raw]
