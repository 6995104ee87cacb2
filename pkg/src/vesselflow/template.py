"""Canonical unit-radius tube template and its angular-slice sub-templates.

The template lives in normalized profile coordinates q = (q_x, q_y): q_x runs
across the tube, q_y along it. It is never resampled; images are resampled
into q-space instead (see :mod:`vesselflow.match`). The profile is a linearly
ramped indicator so alignment losses stay differentiable in radius and angle.
"""

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class TubeTemplate:
    """Ramped tube patch plus optional angular slice masks.

    values[j, i] is the profile at (q_x[i], q_y[j]); it is 1 inside the tube
    core, 0 outside the ramp, independent of q_y.
    """

    grid_size: int
    extent: float
    ramp_width: float
    qx: np.ndarray
    qy: np.ndarray
    values: np.ndarray
    slice_masks: tuple[np.ndarray, ...] = ()

    @property
    def n_slices(self) -> int:
        return len(self.slice_masks)

    def flat_values(self) -> np.ndarray:
        return self.values.reshape(-1)

    def flat_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """(q_x, q_y) of every grid sample, flattened row-major."""
        gx, gy = np.meshgrid(self.qx, self.qy)
        return gx.reshape(-1), gy.reshape(-1)


def ramp_profile(d, ramp_width: float):
    """Radial tube profile: 1 for d <= 1 - tau, 0 for d >= 1 + tau, linear between.

    d is |q_x| (distance from the tube axis in radius units).
    """
    d = np.asarray(d, dtype=np.float64)
    tau = ramp_width
    return np.clip((1.0 + tau - d) / (2.0 * tau), 0.0, 1.0)


def make_template(grid_size: int = 9, extent: float = 1.5, ramp_width: float = 0.25) -> TubeTemplate:
    """Build the canonical tube template on a grid_size x grid_size lattice
    spanning q in [-extent, extent]^2."""
    if grid_size < 5 or grid_size % 2 == 0:
        raise ValueError("grid_size must be odd and >= 5")
    if extent <= 1.0:
        raise ValueError("extent must exceed 1 so the patch sees background")
    if not 0.0 < ramp_width < extent - 1.0:
        raise ValueError("ramp_width must lie in (0, extent - 1)")
    q = np.linspace(-extent, extent, grid_size)
    profile = ramp_profile(np.abs(q), ramp_width)
    values = np.tile(profile, (grid_size, 1))
    values.setflags(write=False)
    return TubeTemplate(
        grid_size=grid_size,
        extent=extent,
        ramp_width=ramp_width,
        qx=q,
        qy=q.copy(),
        values=values,
    )


def make_slices(t: TubeTemplate, n_slices: int = 2) -> TubeTemplate:
    """Attach n_slices angular-sector masks partitioning the grid around the origin.

    For n_slices=2 the masks are the half-planes q_x <= 0 and q_x >= 0.
    Samples on a sector boundary (and the origin) belong to both neighbours,
    so the union always covers the grid.
    """
    if n_slices < 2:
        raise ValueError("n_slices must be >= 2")
    gx, gy = np.meshgrid(t.qx, t.qy)
    theta = np.arctan2(gy, gx)
    origin = (gx == 0.0) & (gy == 0.0)
    width = 2.0 * np.pi / n_slices
    eps = 1e-9
    masks = []
    for i in range(n_slices):
        # sectors start at -pi/2 so the two-slice case splits across the axis
        lo = -np.pi / 2.0 + i * width
        # membership of the wrapped angular interval [lo, lo + width]
        rel = (theta - lo) % (2.0 * np.pi)
        m = (rel <= width + eps) | (rel >= 2.0 * np.pi - eps)
        m = m | origin
        m.setflags(write=False)
        masks.append(m)
    counts = [int(m.sum()) for m in masks]
    if min(counts) < t.grid_size:
        raise ValueError("slice masks too small for a meaningful correlation")
    return replace(t, slice_masks=tuple(masks))
