"""End-to-end recipes shared by the CLI and the benchmark suites."""

from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from . import loss as lss
from . import match, metrics, synth
from .field import ScalarField2D
from .frangi import FrangiConfig, frangi2d
from .optim import OptimConfig, init_matched_filter, refine
from .params import VesselParams
from .template import TubeTemplate, make_slices, make_template


@dataclass(frozen=True)
class EnhanceSettings:
    """Everything one enhancement run depends on."""

    grid_size: int = 9
    extent: float = 1.5
    ramp_width: float = 0.25
    n_slices: int = 2
    loss: lss.LossConfig = dc_field(default_factory=lss.LossConfig)
    optim: OptimConfig = dc_field(default_factory=OptimConfig)
    r_min: float | None = None
    r_max: float | None = None
    robust: bool = True
    bifurcation: bool = True
    tracking: bool = True


@dataclass
class EnhanceResult:
    params: VesselParams
    template: TubeTemplate
    vesselness: ScalarField2D
    augmented: ScalarField2D
    reports: list[lss.LossReport]


def enhance_image(I: ScalarField2D, settings: EnhanceSettings = EnhanceSettings()
                  ) -> EnhanceResult:
    """Matched-filter init, descent refinement, then score maps.

    Disabling bifurcation zeroes its loss weight and leaves the half-angles
    frozen at 0, so the map reduces to the single-direction score; disabling
    tracking makes the augmented map equal the raw one.
    """
    t = make_slices(make_template(settings.grid_size, settings.extent,
                                  settings.ramp_width), settings.n_slices)
    lcfg = settings.loss
    if not settings.bifurcation:
        lcfg = replace(lcfg, lambda2=0.0)
    params = init_matched_filter(I, t, settings.optim,
                                 r_min=settings.r_min, r_max=settings.r_max)
    params, reports = refine(I, params, t, lcfg, settings.optim)
    if settings.bifurcation:
        V = match.bifurcation_vesselness_field(I, params, t, robust=settings.robust)
    else:
        V = match.vesselness_field(I, params, t, robust=settings.robust)
    U = lss.augmented_vesselness(V, params, lcfg) if settings.tracking else V
    return EnhanceResult(params=params, template=t, vesselness=V, augmented=U,
                         reports=reports)


def _noise_seed(base: int, sigma_index: int, scene_index: int) -> int:
    return base * 100003 + sigma_index * 1009 + scene_index + 1


def run_noise_bench(scene_cfg: synth.SceneConfig, sigmas, n_train: int, n_test: int,
                    settings: EnhanceSettings, frangi_cfg: FrangiConfig,
                    seed: int) -> list[dict]:
    """Noise-sweep benchmark: per sigma, enhance train+test scenes with both
    methods, pick each method's threshold on the train split (max Dice), and
    report mean test Dice/AUC. Returns one row dict per (sigma, method)."""
    n_total = n_train + n_test
    scenes = [synth.generate_tree(replace(scene_cfg, seed=seed + i)) for i in range(n_total)]
    rows = []
    for s_idx, sigma in enumerate(sigmas):
        maps = {"ours": [], "frangi": []}
        for i, scene in enumerate(scenes):
            noisy = synth.add_gaussian_noise(scene.image, sigma, _noise_seed(seed, s_idx, i))
            maps["ours"].append(enhance_image(noisy, settings).augmented.data)
            maps["frangi"].append(frangi2d(noisy, frangi_cfg).data)
        for method in ("ours", "frangi"):
            train_scores = np.concatenate([m.reshape(-1) for m in maps[method][:n_train]])
            train_gt = np.concatenate([s.mask.reshape(-1) for s in scenes[:n_train]])
            tau, _ = metrics.best_threshold(train_scores, train_gt)
            dices = []
            aucs = []
            for m, scene in zip(maps[method][n_train:], scenes[n_train:]):
                seg = m >= tau
                dices.append(metrics.confusion_metrics(seg, scene.mask).dice)
                aucs.append(metrics.roc_auc(m, scene.mask))
            rows.append({
                "method": method,
                "sigma": sigma,
                "threshold": tau,
                "dice": float(np.mean(dices)),
                "auc": float(np.mean(aucs)),
            })
    return rows
