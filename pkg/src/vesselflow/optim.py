"""Parameter estimation: matched-filter initialization plus projected
finite-difference descent on the training objective.

The descent treats each pixel's parameters against a frozen snapshot of its
neighbours (synchronous Jacobi sweep): the profile and branch terms only ever
depend on a pixel's own parameters, and the path terms read neighbour
directions from the snapshot, so one sweep costs O(pixels * ray length).
Updates are applied in a single writer phase with backtracking step halving
on the full objective.
"""

from dataclasses import dataclass

import numpy as np

from . import field as fld
from . import loss as lss
from . import match
from .field import ScalarField2D, wrap_angle
from .params import HALF_ANGLE_MARGIN, VesselParams
from .template import TubeTemplate

THETA_LIMIT = np.pi / 2.0 - HALF_ANGLE_MARGIN


@dataclass(frozen=True)
class OptimConfig:
    """Grids and step sizes for initialization and refinement.

    Grids left as None are resolved against the image's radius bounds:
    8 log-spaced radii in [r_min, r_max] and 12 angles over [0, pi).
    """

    radii_grid: tuple[float, ...] | None = None
    angle_grid: tuple[float, ...] | None = None
    iters: int = 200
    step_r: float = 0.05
    step_angle: float = 0.05
    fd_h_r: float = 1e-3
    fd_h_angle: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.radii_grid is not None:
            if len(self.radii_grid) == 0 or any(r <= 0 for r in self.radii_grid):
                raise ValueError("radii_grid must be non-empty and positive")
        if self.angle_grid is not None and len(self.angle_grid) == 0:
            raise ValueError("angle_grid must be non-empty")
        if self.iters < 0:
            raise ValueError("iters must be nonnegative")
        if self.step_r <= 0 or self.step_angle <= 0:
            raise ValueError("descent steps must be positive")
        if self.fd_h_r <= 0 or self.fd_h_angle <= 0:
            raise ValueError("finite-difference steps must be positive")


def default_radii_grid(r_min: float, r_max: float, count: int = 8) -> tuple[float, ...]:
    return tuple(np.geomspace(r_min, r_max, count))


def default_angle_grid(count: int = 12) -> tuple[float, ...]:
    return tuple(np.linspace(0.0, np.pi, count, endpoint=False))


def resolve_grids(cfg: OptimConfig, r_min: float, r_max: float):
    radii = cfg.radii_grid if cfg.radii_grid is not None else default_radii_grid(r_min, r_max)
    angles = cfg.angle_grid if cfg.angle_grid is not None else default_angle_grid()
    return np.asarray(radii, dtype=np.float64), np.asarray(angles, dtype=np.float64)


# --- matched-filter initialization ----------------------------------------


def _shifted_plane(padded: np.ndarray, pad: int, h: int, w: int, dx: float, dy: float):
    """Image translated by a real offset, bilinear, clamp-to-edge."""
    ix = int(np.floor(dx))
    iy = int(np.floor(dy))
    fx = dx - ix
    fy = dy - iy
    x0 = pad + ix
    y0 = pad + iy
    b00 = padded[y0 : y0 + h, x0 : x0 + w]
    b01 = padded[y0 : y0 + h, x0 + 1 : x0 + 1 + w]
    b10 = padded[y0 + 1 : y0 + 1 + h, x0 : x0 + w]
    b11 = padded[y0 + 1 : y0 + 1 + h, x0 + 1 : x0 + 1 + w]
    return ((1 - fx) * (1 - fy)) * b00 + (fx * (1 - fy)) * b01 \
        + ((1 - fx) * fy) * b10 + (fx * fy) * b11


def matched_pcc_map(padded: np.ndarray, pad: int, shape, r: float, angle: float,
                    t: TubeTemplate) -> np.ndarray:
    """PCC against the template at one fixed (radius, angle) for every pixel.

    Because the offsets are constant across pixels, each template sample is a
    bilinear translate of the whole image; this avoids per-pixel gathers.
    """
    h, w = shape
    qxf, qyf = t.flat_offsets()
    tvals = t.flat_values()
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    s1 = np.zeros(shape)
    s2 = np.zeros(shape)
    st = np.zeros(shape)
    for qx, qy, tv in zip(qxf, qyf, tvals):
        dx = r * (-qx * sin_a + qy * cos_a)
        dy = r * (qx * cos_a + qy * sin_a)
        plane = _shifted_plane(padded, pad, h, w, dx, dy)
        s1 += plane
        s2 += plane * plane
        st += tv * plane
    m = tvals.size
    mu_t = tvals.mean()
    dt = tvals - mu_t
    var_t = float(dt @ dt) / m
    mu_p = s1 / m
    var_p = np.maximum(s2 / m - mu_p * mu_p, 0.0)
    cov = st / m - mu_p * mu_t
    out = np.zeros(shape)
    ok = (var_p >= match.VAR_FLOOR) & (var_t >= match.VAR_FLOOR)
    np.divide(cov, np.sqrt(var_p * var_t, where=ok, out=np.ones(shape)), out=out, where=ok)
    return out


def init_matched_filter(I: ScalarField2D, t: TubeTemplate,
                        cfg: OptimConfig = OptimConfig(),
                        r_min: float | None = None,
                        r_max: float | None = None) -> VesselParams:
    """Per-pixel argmax of PCC over the radius/angle grid.

    Ties break toward the smaller radius, then the smaller angle, so flat
    regions never inherit large-radius matches. Half-angles start at zero.
    """
    h, w = I.data.shape
    vp = VesselParams.zeros(w, h, r_min=r_min, r_max=r_max)
    radii, angles = resolve_grids(cfg, vp.r_min, vp.r_max)
    order_r = np.sort(radii)
    order_a = np.sort(angles)
    pad = int(np.ceil(order_r[-1] * t.extent * np.sqrt(2.0))) + 2
    padded = np.pad(I.data, pad, mode="edge")
    best = np.full((h, w), -np.inf)
    best_r = np.full((h, w), order_r[0])
    best_a = np.full((h, w), order_a[0])
    for r in order_r:
        for a in order_a:
            pm = matched_pcc_map(padded, pad, (h, w), float(r), float(a), t)
            better = pm > best
            best[better] = pm[better]
            best_r[better] = r
            best_a[better] = a
    vp.r = np.clip(best_r, vp.r_min, vp.r_max)
    vp.phi = wrap_angle(best_a)
    return vp


# --- gradients --------------------------------------------------------------


def _theta_clip(v):
    return np.clip(v, -THETA_LIMIT, THETA_LIMIT)


def fd_gradient(loss_fn, vp: VesselParams, p: tuple[int, int],
                cfg: OptimConfig = OptimConfig()) -> tuple[float, float, float, float]:
    """Central finite differences of loss_fn w.r.t. pixel p's four parameters.

    Radius and half-angle perturbations are projected back into bounds before
    evaluation. loss_fn takes a VesselParams and returns a scalar.
    """
    x, y = p
    grads = []
    for name in ("r", "phi", "theta1", "theta2"):
        h = cfg.fd_h_r if name == "r" else cfg.fd_h_angle
        v0 = float(getattr(vp, name)[y, x])
        if name == "r":
            v_plus = min(v0 + h, vp.r_max)
            v_minus = max(v0 - h, vp.r_min)
        elif name == "phi":
            v_plus, v_minus = v0 + h, v0 - h
        else:
            v_plus = float(_theta_clip(v0 + h))
            v_minus = float(_theta_clip(v0 - h))
        up = vp.copy()
        getattr(up, name)[y, x] = v_plus
        down = vp.copy()
        getattr(down, name)[y, x] = v_minus
        grads.append((loss_fn(up) - loss_fn(down)) / (2.0 * h))
    return tuple(grads)


def local_loss_at(I: ScalarField2D, v_frozen: ScalarField2D, vp: VesselParams,
                  t: TubeTemplate, cfg: lss.LossConfig, p: tuple[int, int]) -> float:
    """Pixel p's own contribution to the objective (profile + flow + branch +
    consistency terms), with neighbour directions read from vp as given."""
    gi = fld.gradient(I)
    gv = fld.gradient(v_frozen)
    return _local_terms_at(I, (gi[0].data, gi[1].data), (gv[0].data, gv[1].data),
                           vp, t, cfg, p)


def _local_terms_at(I, grad_i, grad_v, vp, t, cfg, p) -> float:
    x, y = p
    r = float(vp.r[y, x])
    phi = float(vp.phi[y, x])
    patch = match.extract_patch(I, (float(x), float(y)), r, phi, t)
    total = -match.pcc(patch, t)

    n = cfg.path_steps
    ts = np.arange(n + 1) * (2.0 * r / n)
    xs = x + ts * np.cos(phi)
    ys = y + ts * np.sin(phi)
    weights = lss._trapezoid_weights(n) * (2.0 * r / n)
    if cfg.lambda1 > 0:
        ang = fld.nearest_lookup(vp.phi, xs, ys)
        total += cfg.lambda1 * float(-(weights @ np.cos(phi - ang)) / (2.0 * r))
    if cfg.lambda2 > 0:
        lb = 0.0
        for theta in (float(vp.theta1[y, x]), float(vp.theta2[y, x])):
            branch = match.extract_patch(I, (float(x), float(y)), r, phi + np.pi + theta, t)
            lb -= match.pcc(branch, t)
        total += cfg.lambda2 * lb
    if cfg.lambda3 > 0:
        ux, uy = np.cos(phi), np.sin(phi)
        vals = np.abs(ux * fld.sample_bilinear_array(grad_i[0], xs, ys)
                      + uy * fld.sample_bilinear_array(grad_i[1], xs, ys))
        vals += np.abs(ux * fld.sample_bilinear_array(grad_v[0], xs, ys)
                       + uy * fld.sample_bilinear_array(grad_v[1], xs, ys))
        total += cfg.lambda3 * float((weights @ vals) / (2.0 * r))
    return total


# --- refinement --------------------------------------------------------------


def _term_fields(I, grad_i, grad_v, t, cfg, r, phi, th1, th2, phi_lookup):
    """Per-pixel loss contributions for the given parameter arrays."""
    lm = lss.profile_term_values(I, r, phi, t)
    parts = [lm]
    lf = lb = lr = None
    if cfg.lambda1 > 0:
        lf = lss.flow_term_values(r, phi, phi_lookup, cfg.path_steps)
        parts.append(cfg.lambda1 * lf)
    if cfg.lambda2 > 0:
        lb = _branch_fields(I, t, r, phi, th1, th2)
        parts.append(cfg.lambda2 * lb)
    if cfg.lambda3 > 0:
        lr = lss.reg_term_values(grad_i, grad_v, r, phi, cfg.path_steps)
        parts.append(cfg.lambda3 * lr)
    total = parts[0].copy()
    for extra in parts[1:]:
        total += extra
    return total, lm, lf, lb, lr


def _branch_fields(I, t, r, phi, th1, th2):
    return (-match.pcc_field(I, r, phi + np.pi + th1, t)
            - match.pcc_field(I, r, phi + np.pi + th2, t))


def _report_from_fields(lm, lf, lb, lr, cfg: lss.LossConfig) -> lss.LossReport:
    mean = lambda a: float(a.mean()) if a is not None else 0.0
    return lss.LossReport.assemble(mean(lm), mean(lf), mean(lb), mean(lr), cfg)


def field_gradients(I: ScalarField2D, v_frozen: ScalarField2D | None,
                    params: VesselParams, t: TubeTemplate,
                    loss_cfg: lss.LossConfig, cfg: OptimConfig = OptimConfig()):
    """Central FD gradients of every pixel's local loss terms, neighbours frozen.

    Returns (g_r, g_phi, g_theta1, g_theta2) as (H, W) arrays; equivalent to
    running fd_gradient on the per-pixel local loss at every pixel.
    """
    gi = fld.gradient(I)
    grad_i = (gi[0].data, gi[1].data)
    if loss_cfg.lambda3 > 0:
        if v_frozen is None:
            v_frozen = match.vesselness_field(I, params, t)
        gv = fld.gradient(v_frozen)
        grad_v = (gv[0].data, gv[1].data)
    else:
        zero = np.zeros_like(I.data)
        grad_v = (zero, zero)
    return _field_gradients(I, grad_i, grad_v, params, t, loss_cfg, cfg,
                            params.phi.copy())


def _field_gradients(I, grad_i, grad_v, params, t, loss_cfg, cfg, frozen_phi):
    h_r, h_a = cfg.fd_h_r, cfg.fd_h_angle
    zero = np.zeros_like(I.data)

    def total(r, phi, th1, th2):
        return _term_fields(I, grad_i, grad_v, t, loss_cfg, r, phi, th1, th2,
                            frozen_phi)[0]

    g_r = (total(np.minimum(params.r + h_r, params.r_max), params.phi,
                 params.theta1, params.theta2)
           - total(np.maximum(params.r - h_r, params.r_min), params.phi,
                   params.theta1, params.theta2)) / (2.0 * h_r)
    g_phi = (total(params.r, params.phi + h_a, params.theta1, params.theta2)
             - total(params.r, params.phi - h_a, params.theta1, params.theta2)
             ) / (2.0 * h_a)
    if loss_cfg.lambda2 > 0:
        # each half-angle only enters its own branch patch
        def branch_grad(theta):
            back = params.phi + np.pi
            hi = -match.pcc_field(I, params.r, back + _theta_clip(theta + h_a), t)
            lo = -match.pcc_field(I, params.r, back + _theta_clip(theta - h_a), t)
            return (hi - lo) * (loss_cfg.lambda2 / (2.0 * h_a))

        g_t1 = branch_grad(params.theta1)
        g_t2 = branch_grad(params.theta2)
    else:
        g_t1 = g_t2 = zero
    return g_r, g_phi, g_t1, g_t2


def refine(I: ScalarField2D, params0: VesselParams, t: TubeTemplate,
           loss_cfg: lss.LossConfig, cfg: OptimConfig = OptimConfig()
           ) -> tuple[VesselParams, list[lss.LossReport]]:
    """Projected descent on the objective, one synchronous sweep per iteration.

    Each iteration recomputes the frozen vesselness snapshot, takes central
    finite differences of every pixel's local terms, then applies one global
    step with backtracking halving (up to 10 times) on the full objective; if
    the step never improves it is accepted anyway and recorded. The half-angle
    updates keep theta1 >= 0 >= theta2, which pins one branch to each side of
    the flow and stops the pair from collapsing onto a single direction.

    Loss terms with zero weight are skipped during the sweep and appear as
    zero in the per-iteration reports.
    """
    params0.validate()
    params = params0.copy()
    reports: list[lss.LossReport] = []
    if cfg.iters == 0:
        return params, reports
    gi = fld.gradient(I)
    grad_i = (gi[0].data, gi[1].data)
    zero = np.zeros_like(I.data)

    for _ in range(cfg.iters):
        if loss_cfg.lambda3 > 0:
            v_frozen = match.vesselness_field(I, params, t)
            gv = fld.gradient(v_frozen)
            grad_v = (gv[0].data, gv[1].data)
        else:
            grad_v = (zero, zero)
        frozen_phi = params.phi.copy()

        def terms(r, phi, th1, th2, lookup):
            return _term_fields(I, grad_i, grad_v, t, loss_cfg, r, phi, th1, th2, lookup)

        base_total, *_ = terms(params.r, params.phi, params.theta1, params.theta2,
                               frozen_phi)
        base = float(base_total.mean())
        g_r, g_phi, g_t1, g_t2 = _field_gradients(I, grad_i, grad_v, params, t,
                                                  loss_cfg, cfg, frozen_phi)

        scale = 1.0
        accepted = None
        for _attempt in range(11):
            r_new = np.clip(params.r - scale * cfg.step_r * g_r, params.r_min, params.r_max)
            phi_new = wrap_angle(params.phi - scale * cfg.step_angle * g_phi)
            th1_new = np.clip(params.theta1 - scale * cfg.step_angle * g_t1, 0.0, THETA_LIMIT)
            th2_new = np.clip(params.theta2 - scale * cfg.step_angle * g_t2, -THETA_LIMIT, 0.0)
            cand = terms(r_new, phi_new, th1_new, th2_new, phi_new)
            accepted = (r_new, phi_new, th1_new, th2_new, cand)
            if float(cand[0].mean()) <= base:
                break
            scale *= 0.5
        params.r, params.phi, params.theta1, params.theta2, cand = accepted
        reports.append(_report_from_fields(cand[1], cand[2], cand[3], cand[4], loss_cfg))
    return params, reports
