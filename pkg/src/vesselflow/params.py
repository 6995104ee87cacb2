"""Per-pixel vessel parameters: radius r, flow angle phi, bifurcation half-angles.

The branch directions derive from the flow: b_i = rotate(-u, theta_i). The
half-angle range keeps <b_i, u> = -cos(theta_i) strictly negative, which stops
the branch directions from collapsing onto the vessel flow.
"""

from dataclasses import dataclass

import numpy as np

# keeps the half-angles strictly away from +-pi/2 where <b, u> would vanish
HALF_ANGLE_MARGIN = 0.05

DEFAULT_R_MIN = 0.8


def default_radius_bounds(width: int, height: int) -> tuple[float, float]:
    return DEFAULT_R_MIN, min(width, height) / 8.0


@dataclass
class VesselParams:
    """Bundled per-pixel fields (r, phi, theta1, theta2) plus radius bounds."""

    r: np.ndarray
    phi: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    r_min: float
    r_max: float

    @property
    def height(self) -> int:
        return self.r.shape[0]

    @property
    def width(self) -> int:
        return self.r.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.r.shape

    @classmethod
    def zeros(cls, width: int, height: int, r_min: float | None = None,
              r_max: float | None = None) -> "VesselParams":
        lo, hi = default_radius_bounds(width, height)
        r_min = lo if r_min is None else r_min
        r_max = hi if r_max is None else r_max
        shape = (height, width)
        return cls(
            r=np.full(shape, r_min, dtype=np.float64),
            phi=np.zeros(shape, dtype=np.float64),
            theta1=np.zeros(shape, dtype=np.float64),
            theta2=np.zeros(shape, dtype=np.float64),
            r_min=float(r_min),
            r_max=float(r_max),
        )

    def copy(self) -> "VesselParams":
        return VesselParams(
            r=self.r.copy(),
            phi=self.phi.copy(),
            theta1=self.theta1.copy(),
            theta2=self.theta2.copy(),
            r_min=self.r_min,
            r_max=self.r_max,
        )

    def validate(self) -> None:
        shape = self.r.shape
        for name in ("phi", "theta1", "theta2"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} shape differs from r")
        if not (0.0 < self.r_min <= self.r_max):
            raise ValueError("invalid radius bounds")
        if self.r.min() < self.r_min - 1e-9 or self.r.max() > self.r_max + 1e-9:
            raise ValueError("radius field violates [r_min, r_max]")
        lim = np.pi / 2.0 - HALF_ANGLE_MARGIN
        for name in ("theta1", "theta2"):
            th = getattr(self, name)
            if np.abs(th).max() > lim + 1e-9:
                raise ValueError(f"{name} outside the admissible half-angle range")
        for name in ("r", "phi", "theta1", "theta2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")

    def branch_angles(self) -> tuple[np.ndarray, np.ndarray]:
        """Absolute angles of b1 and b2 (rotations of -u by theta1/theta2)."""
        back = self.phi + np.pi
        return back + self.theta1, back + self.theta2

    def flow_field(self):
        """The vessel flow u as a direction field."""
        from .field import DirectionField2D

        return DirectionField2D(self.phi)

    def branch_fields(self):
        """The two branch flows (b1, b2) as direction fields."""
        from .field import DirectionField2D

        b1, b2 = self.branch_angles()
        return DirectionField2D(b1), DirectionField2D(b2)
