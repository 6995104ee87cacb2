"""Self-supervised losses over the parameter fields, plus the tracking score.

Every loss is the mean of a per-pixel term, and every path term follows a
straight ray p + t*u(p) integrated by trapezoid quadrature over [0, 2r(p)]
(the walk length scales with the vessel so loss magnitudes are radius
independent). Directions at fractional ray positions take the angle of the
nearest pixel; interpolating angles across the -pi/pi seam is ill-defined.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import field as fld
from . import match
from .field import ScalarField2D
from .params import VesselParams
from .template import TubeTemplate


@dataclass(frozen=True)
class LossConfig:
    """Weights and discretization of the training objective."""

    lambda1: float = 1.0  # flow continuity
    lambda2: float = 1.0  # bifurcation alignment
    lambda3: float = 1.0  # intensity/vesselness consistency
    path_steps: int = 8
    track_steps: int = 16

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.lambda3 < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.path_steps < 2:
            raise ValueError("path_steps must be >= 2")
        if self.track_steps < 1:
            raise ValueError("track_steps must be >= 1")


@dataclass(frozen=True)
class LossReport:
    """Per-term totals; total == l_m + l1*l_f + l2*l_b + l3*l_r by construction."""

    l_m: float
    l_f: float
    l_b: float
    l_r: float
    total: float
    lambdas: tuple[float, float, float]
    path_steps: int

    @classmethod
    def assemble(cls, l_m: float, l_f: float, l_b: float, l_r: float,
                 cfg: LossConfig) -> "LossReport":
        lams = (cfg.lambda1, cfg.lambda2, cfg.lambda3)
        total = l_m + lams[0] * l_f + lams[1] * l_b + lams[2] * l_r
        return cls(l_m=l_m, l_f=l_f, l_b=l_b, l_r=l_r, total=total,
                   lambdas=lams, path_steps=cfg.path_steps)

    def to_json(self) -> str:
        return json.dumps(
            {
                "l_m": self.l_m,
                "l_f": self.l_f,
                "l_b": self.l_b,
                "l_r": self.l_r,
                "total": self.total,
                "lambdas": list(self.lambdas),
                "path_steps": self.path_steps,
            },
            sort_keys=True,
        )


def path_integrate(g, p: tuple[float, float], angle: float, length: float, n: int) -> float:
    """Trapezoid quadrature of g along the ray p + t*(cos angle, sin angle),
    t in [0, length], n intervals. Exact for integrands linear in t."""
    if length < 0:
        raise ValueError("path length must be nonnegative")
    if n < 2:
        raise ValueError("need at least 2 intervals")
    if length == 0.0:
        return 0.0
    step = length / n
    ts = np.arange(n + 1) * step
    xs = p[0] + ts * np.cos(angle)
    ys = p[1] + ts * np.sin(angle)
    vals = np.array([g(float(x), float(y)) for x, y in zip(xs, ys)], dtype=np.float64)
    weights = np.ones(n + 1)
    weights[0] = weights[-1] = 0.5
    return float(np.sum(weights * vals) * step)


def _trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n + 1)
    w[0] = w[-1] = 0.5
    return w


def _ray_coords(px, py, phi, lengths, n):
    """Sample coordinates (n+1, N) along straight rays, plus the step sizes."""
    step = lengths / n
    ts = np.arange(n + 1)[:, None] * step[None, :]
    xs = px[None, :] + ts * np.cos(phi)[None, :]
    ys = py[None, :] + ts * np.sin(phi)[None, :]
    return xs, ys, step


def _grid(shape):
    h, w = shape
    gy, gx = np.mgrid[0:h, 0:w]
    return gx.reshape(-1).astype(np.float64), gy.reshape(-1).astype(np.float64)


def flow_term_values(r: np.ndarray, phi_geom: np.ndarray, phi_lookup: np.ndarray,
                     n: int) -> np.ndarray:
    """Per-pixel flow-consistency term: -(1/2r) * integral of <u(p), u(.)>.

    phi_geom drives the ray geometry and reference direction; phi_lookup is
    the field the walk reads directions from (they coincide outside gradient
    sweeps, where the neighbours stay frozen).
    """
    px, py = _grid(r.shape)
    rf = r.reshape(-1)
    pf = phi_geom.reshape(-1)
    xs, ys, step = _ray_coords(px, py, pf, 2.0 * rf, n)
    ang = fld.nearest_lookup(phi_lookup, xs, ys)
    vals = np.cos(pf[None, :] - ang)
    integral = (_trapezoid_weights(n) @ vals) * step
    return (-integral / (2.0 * rf)).reshape(r.shape)


def reg_term_values(grad_i: tuple[np.ndarray, np.ndarray],
                    grad_v: tuple[np.ndarray, np.ndarray],
                    r: np.ndarray, phi: np.ndarray, n: int) -> np.ndarray:
    """Per-pixel consistency term: path average of |u . grad I| + |u . grad V|."""
    px, py = _grid(r.shape)
    rf = r.reshape(-1)
    pf = phi.reshape(-1)
    xs, ys, step = _ray_coords(px, py, pf, 2.0 * rf, n)
    ux = np.cos(pf)[None, :]
    uy = np.sin(pf)[None, :]
    acc = np.abs(ux * fld.sample_bilinear_array(grad_i[0], xs, ys)
                 + uy * fld.sample_bilinear_array(grad_i[1], xs, ys))
    acc += np.abs(ux * fld.sample_bilinear_array(grad_v[0], xs, ys)
                  + uy * fld.sample_bilinear_array(grad_v[1], xs, ys))
    integral = (_trapezoid_weights(n) @ acc) * step
    return (integral / (2.0 * rf)).reshape(r.shape)


def profile_term_values(I: ScalarField2D, r: np.ndarray, phi: np.ndarray,
                        t: TubeTemplate) -> np.ndarray:
    """Per-pixel profile-alignment term: -PCC of the patch at (r, phi)."""
    return -match.pcc_field(I, r, phi, t)


def _masked_mean(values: np.ndarray, mask) -> float:
    if mask is None:
        return float(values.mean())
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != values.shape:
        raise ValueError("mask shape differs from the field")
    if not mask.any():
        raise ValueError("empty loss domain")
    return float(values[mask].mean())


def loss_profile(I: ScalarField2D, vp: VesselParams, t: TubeTemplate,
                 mask=None) -> float:
    """Profile-alignment loss: mean of -PCC over the domain; in [-1, 1]."""
    return _masked_mean(profile_term_values(I, vp.r, vp.phi, t), mask)


def loss_flow(vp: VesselParams, cfg: LossConfig, mask=None) -> float:
    """Flow-continuity loss; -1 exactly on a constant direction field."""
    return _masked_mean(flow_term_values(vp.r, vp.phi, vp.phi, cfg.path_steps), mask)


def loss_bifurcation(I: ScalarField2D, vp: VesselParams, t: TubeTemplate,
                     mask=None) -> float:
    """Branch-alignment loss: profile loss along b1 plus the same along b2."""
    b1, b2 = vp.branch_angles()
    return (_masked_mean(profile_term_values(I, vp.r, b1, t), mask)
            + _masked_mean(profile_term_values(I, vp.r, b2, t), mask))


def loss_regularizer(I: ScalarField2D, v_frozen: ScalarField2D, vp: VesselParams,
                     cfg: LossConfig, mask=None) -> float:
    """Intensity/vesselness consistency along the flow; nonnegative.

    v_frozen is a fixed snapshot of the vesselness field, recomputed once per
    outer optimization iteration rather than differentiated through.
    """
    if (v_frozen.height, v_frozen.width) != (I.height, I.width):
        raise ValueError("vesselness snapshot dimensions differ from the image")
    gi = fld.gradient(I)
    gv = fld.gradient(v_frozen)
    vals = reg_term_values((gi[0].data, gi[1].data), (gv[0].data, gv[1].data),
                           vp.r, vp.phi, cfg.path_steps)
    return _masked_mean(vals, mask)


def loss_total(I: ScalarField2D, v_frozen: ScalarField2D, vp: VesselParams,
               t: TubeTemplate, cfg: LossConfig, mask=None) -> LossReport:
    """Assemble the full training objective."""
    l_m = loss_profile(I, vp, t, mask)
    l_f = loss_flow(vp, cfg, mask)
    l_b = loss_bifurcation(I, vp, t, mask)
    l_r = loss_regularizer(I, v_frozen, vp, cfg, mask)
    return LossReport.assemble(l_m, l_f, l_b, l_r, cfg)


def tracking_field(vp: VesselParams, cfg: LossConfig) -> np.ndarray:
    """Per-pixel tracking score: path average of |<u(p), u(.)>| over [0, 4r].

    The longer walk (twice the training rays) checks direction coherence
    beyond the neighbourhood the losses already enforce; in [0, 1].
    """
    n = cfg.track_steps
    px, py = _grid(vp.shape)
    rf = vp.r.reshape(-1)
    pf = vp.phi.reshape(-1)
    xs, ys, step = _ray_coords(px, py, pf, 4.0 * rf, n)
    ang = fld.nearest_lookup(vp.phi, xs, ys)
    vals = np.abs(np.cos(pf[None, :] - ang))
    integral = (_trapezoid_weights(n) @ vals) * step
    return (integral / (4.0 * rf)).reshape(vp.shape)


def tracking_score(vp: VesselParams, cfg: LossConfig, p: tuple[int, int]) -> float:
    """Tracking score at pixel p = (x, y)."""
    x, y = p
    return float(tracking_field(vp, cfg)[y, x])


def augmented_vesselness(V: ScalarField2D, vp: VesselParams,
                         cfg: LossConfig) -> ScalarField2D:
    """Dampen the tube score by the tracking score: U = V * V_t <= V."""
    if V.data.shape != vp.shape:
        raise ValueError("vesselness dimensions differ from the parameter fields")
    return ScalarField2D(V.data * tracking_field(vp, cfg))
