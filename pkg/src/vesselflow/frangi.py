"""Multi-scale Frangi vesselness (2D), the classical Hessian baseline.

Per scale: Gaussian smoothing by separable discrete convolution (kernel radius
ceil(3*sigma), edge-clamped), Hessian by central differences scaled by sigma^2,
eigenvalues ordered |l1| <= |l2|. Bright tubes require l2 < 0; the response is
exp(-Rb^2 / 2 beta^2) * (1 - exp(-S^2 / 2 c^2)) with Rb = l1/l2 and
S = sqrt(l1^2 + l2^2), maximized over scales.
"""

from dataclasses import dataclass

import numpy as np

from .field import ScalarField2D


@dataclass(frozen=True)
class FrangiConfig:
    sigmas: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0)
    beta: float = 0.5
    c: float | None = None  # None selects half the max Hessian norm at each scale
    polarity: str = "bright"

    def __post_init__(self):
        if len(self.sigmas) == 0:
            raise ValueError("sigmas must be non-empty")
        if any(s <= 0 for s in self.sigmas):
            raise ValueError("sigmas must be positive")
        if any(b >= a for a, b in zip(self.sigmas[1:], self.sigmas[:-1])):
            raise ValueError("sigmas must be strictly increasing")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.c is not None and self.c <= 0:
            raise ValueError("c must be positive")
        if self.polarity not in ("bright", "dark"):
            raise ValueError("polarity must be 'bright' or 'dark'")


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _convolve_axis(data: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = (len(kernel) - 1) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(data, pad, mode="edge")
    out = np.zeros_like(data)
    for j, w in enumerate(kernel):
        if axis == 0:
            out += w * padded[j : j + data.shape[0], :]
        else:
            out += w * padded[:, j : j + data.shape[1]]
    return out


def gaussian_smooth(data: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with clamp-to-edge boundaries."""
    k = _gaussian_kernel(sigma)
    return _convolve_axis(_convolve_axis(data, k, 0), k, 1)


def _central_diff(data: np.ndarray, axis: int) -> np.ndarray:
    pad = [(0, 0), (0, 0)]
    pad[axis] = (1, 1)
    p = np.pad(data, pad, mode="edge")
    if axis == 0:
        return (p[2:, :] - p[:-2, :]) / 2.0
    return (p[:, 2:] - p[:, :-2]) / 2.0


def _hessian(data: np.ndarray, sigma: float):
    """Scale-normalized Hessian (hxx, hxy, hyy) of the smoothed image."""
    smooth = gaussian_smooth(data, sigma)
    dx = _central_diff(smooth, 1)
    dy = _central_diff(smooth, 0)
    hxx = _central_diff(dx, 1)
    hyy = _central_diff(dy, 0)
    hxy = _central_diff(dx, 0)
    s2 = sigma * sigma
    return s2 * hxx, s2 * hxy, s2 * hyy


def frangi2d(I: ScalarField2D, cfg: FrangiConfig = FrangiConfig()) -> ScalarField2D:
    """Frangi tube-likeness map in [0, 1), maximum over the configured scales."""
    data = I.data if cfg.polarity == "bright" else 1.0 - I.data
    out = np.zeros_like(data)
    for sigma in cfg.sigmas:
        hxx, hxy, hyy = _hessian(data, sigma)
        half_trace = 0.5 * (hxx + hyy)
        root = np.sqrt(np.maximum(0.25 * (hxx - hyy) ** 2 + hxy * hxy, 0.0))
        ev_a = half_trace + root
        ev_b = half_trace - root
        swap = np.abs(ev_a) > np.abs(ev_b)
        l1 = np.where(swap, ev_b, ev_a)  # |l1| <= |l2|
        l2 = np.where(swap, ev_a, ev_b)
        s_norm = np.sqrt(l1 * l1 + l2 * l2)
        c = cfg.c if cfg.c is not None else 0.5 * float(s_norm.max())
        if c <= 0.0:
            continue  # flat image at this scale
        valid = l2 < 0.0
        rb2 = np.zeros_like(data)
        np.divide(l1, l2, out=rb2, where=valid)
        rb2 *= rb2
        resp = np.exp(-rb2 / (2.0 * cfg.beta ** 2)) * (
            1.0 - np.exp(-(s_norm * s_norm) / (2.0 * c * c))
        )
        resp[~valid] = 0.0
        np.maximum(out, resp, out=out)
    return ScalarField2D(out)
