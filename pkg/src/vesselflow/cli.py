"""Command-line front end tying generation, enhancement, baseline and
evaluation into reproducible recipes.

Every command writes a manifest.json next to its outputs recording the
resolved flags; `vesselflow replay manifest.json` re-executes it and, given
the same build, reproduces the outputs bit for bit. Exit codes: 0 success,
2 usage error, 1 runtime failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import field as fld
from . import metrics, synth
from .field import ScalarField2D
from .frangi import FrangiConfig, frangi2d
from .loss import LossConfig
from .optim import OptimConfig
from .pipeline import EnhanceSettings, enhance_image, run_noise_bench
from .synth import SceneConfig

DEFAULT_NOISE_SIGMAS = (0.0, 0.1, 0.2, 0.3, 0.4)


def _nonneg_float(text):
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
    return value


def _pos_float(text):
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _pos_int(text):
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
    return value


def _float_list(text):
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated number list, got {text}") from exc


def _c_value(text):
    if text == "auto":
        return None
    return _pos_float(text)


def _write_manifest(out_dir: Path, command: str, flags: dict, outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "flags": flags,
        "outputs": sorted(outputs),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _read_scores(path: str) -> np.ndarray:
    p = Path(path)
    if p.suffix == ".tff":
        arr = fld.read_f32(p)
        if arr.ndim != 2:
            raise ValueError("score file must hold a single channel")
        return arr
    return fld.read_pgm(p).data


def _read_mask(path: str) -> np.ndarray:
    return fld.read_pgm(path).data >= 0.5


def cmd_synth(flags: dict) -> int:
    out = Path(flags["out"])
    cfg = SceneConfig(
        width=flags["width"],
        height=flags["height"],
        root_radius=flags["root_radius"],
        radius_decay=flags["radius_decay"],
        branch_angle_range=(flags["branch_angle_min"], flags["branch_angle_max"]),
        min_radius=flags["min_radius"],
        max_depth=flags["max_depth"],
        contrast=flags["contrast"],
        seed=flags["seed"],
    )
    scene = synth.generate_tree(cfg)
    image = synth.add_gaussian_noise(scene.image, flags["sigma"], flags["seed"] + 1_000_003)
    if flags["invert"]:
        image = ScalarField2D(1.0 - image.data)
    synth.save_scene(scene, out, image=image)
    _write_manifest(out, "synth", flags,
                    ["image.pgm", "mask.pgm", "segments.json", "bifurc_boxes.json"])
    return 0


def _enhance_settings(flags: dict) -> EnhanceSettings:
    loss_cfg = LossConfig(
        lambda1=flags["lambda1"],
        lambda2=flags["lambda2"],
        lambda3=flags["lambda3"],
        path_steps=flags["path_steps"],
        track_steps=flags["track_steps"],
    )
    optim_cfg = OptimConfig(
        radii_grid=tuple(flags["radii"]) if flags["radii"] is not None else None,
        angle_grid=tuple(flags["angles"]) if flags["angles"] is not None else None,
        iters=flags["iters"],
        step_r=flags["step_r"],
        step_angle=flags["step_angle"],
        fd_h_r=flags["fd_h_r"],
        fd_h_angle=flags["fd_h_angle"],
        seed=flags["seed"],
    )
    return EnhanceSettings(
        grid_size=flags["grid_size"],
        extent=flags["extent"],
        ramp_width=flags["ramp_width"],
        n_slices=flags["slices"],
        loss=loss_cfg,
        optim=optim_cfg,
        r_min=flags["r_min"],
        r_max=flags["r_max"],
        robust=flags["robust"],
        bifurcation=not flags["no_bifurc"],
        tracking=not flags["no_track"],
    )


def cmd_enhance(flags: dict) -> int:
    out = Path(flags["out"])
    out.mkdir(parents=True, exist_ok=True)
    image = fld.read_pgm(flags["image"])
    result = enhance_image(image, _enhance_settings(flags))
    stack = np.stack([result.params.r, result.params.phi,
                      result.params.theta1, result.params.theta2], axis=-1)
    fld.write_f32(out / "params.tff", stack)
    fld.write_f32(out / "vesselness.tff", result.vesselness.data)
    fld.write_f32(out / "augmented.tff", result.augmented.data)
    with open(out / "losses.jsonl", "w") as fh:
        for report in result.reports:
            fh.write(report.to_json() + "\n")
    _write_manifest(out, "enhance", flags,
                    ["params.tff", "vesselness.tff", "augmented.tff", "losses.jsonl"])
    return 0


def cmd_frangi(flags: dict) -> int:
    out = Path(flags["out"])
    out.mkdir(parents=True, exist_ok=True)
    image = fld.read_pgm(flags["image"])
    cfg = FrangiConfig(sigmas=tuple(flags["sigmas"]), beta=flags["beta"],
                       c=flags["c"], polarity=flags["polarity"])
    fld.write_f32(out / "frangi.tff", frangi2d(image, cfg).data)
    _write_manifest(out, "frangi", flags, ["frangi.tff"])
    return 0


def _threshold_from_dir(train_dir: str) -> float:
    root = Path(train_dir)
    pairs = sorted(d for d in root.iterdir() if d.is_dir())
    scores = []
    gts = []
    for d in pairs:
        score_path = d / "scores.tff"
        gt_path = d / "gt.pgm"
        if score_path.exists() and gt_path.exists():
            scores.append(_read_scores(str(score_path)).reshape(-1))
            gts.append(_read_mask(str(gt_path)).reshape(-1))
    if not scores:
        raise ValueError(f"no scores.tff/gt.pgm pairs under {train_dir}")
    tau, _ = metrics.best_threshold(np.concatenate(scores), np.concatenate(gts))
    return tau


def cmd_eval(flags: dict) -> int:
    out = Path(flags["out"])
    out.mkdir(parents=True, exist_ok=True)
    scores = _read_scores(flags["scores"])
    gt = _read_mask(flags["gt"])
    fov = _read_mask(flags["fov"]) if flags["fov"] else None
    if flags["threshold"] is not None:
        tau = flags["threshold"]
    elif flags["threshold_from"]:
        tau = _threshold_from_dir(flags["threshold_from"])
    else:
        tau, _ = metrics.best_threshold(scores, gt, fov)
    seg = scores >= tau
    report = metrics.confusion_metrics(seg, gt, fov)
    report.auc = metrics.roc_auc(scores, gt, fov)
    report.threshold = float(tau)
    report.local_accuracy = metrics.local_accuracy(seg, gt, flags["dilation_radius"])
    payload = report.to_dict()
    if flags["boxes"]:
        boxes = synth.load_boxes(flags["boxes"])
        payload["bb_dice"] = metrics.bifurcation_bb_dice(seg, gt, boxes)
    (out / "report.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    _write_manifest(out, "eval", flags, ["report.json"])
    return 0


def cmd_bench_noise(flags: dict) -> int:
    out = Path(flags["out"])
    out.mkdir(parents=True, exist_ok=True)
    scene_cfg = SceneConfig(
        width=flags["size"],
        height=flags["size"],
        root_radius=flags["root_radius"],
        max_depth=flags["max_depth"],
        contrast=flags["contrast"],
        min_radius=flags["min_radius"],
        seed=0,
    )
    settings = _enhance_settings(flags)
    rows = run_noise_bench(scene_cfg, flags["sigmas"], flags["train_scenes"],
                           flags["test_scenes"], settings, FrangiConfig(),
                           flags["seed"])
    metrics.write_csv(out / "bench.csv", rows,
                      ["method", "sigma", "threshold", "dice", "auc"])
    _write_manifest(out, "bench-noise", flags, ["bench.csv"])
    return 0


def cmd_replay(flags: dict) -> int:
    manifest = json.loads(Path(flags["manifest"]).read_text())
    command = manifest.get("command")
    if command not in COMMANDS:
        raise ValueError(f"manifest names an unknown command: {command!r}")
    replay_flags = dict(manifest["flags"])
    if flags["out"]:
        replay_flags["out"] = flags["out"]
    return COMMANDS[command](replay_flags)


COMMANDS = {
    "synth": cmd_synth,
    "enhance": cmd_enhance,
    "frangi": cmd_frangi,
    "eval": cmd_eval,
    "bench-noise": cmd_bench_noise,
    "replay": cmd_replay,
}


def _add_enhance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--iters", type=_nonneg_int, default=200)
    p.add_argument("--lambda1", type=_nonneg_float, default=1.0)
    p.add_argument("--lambda2", type=_nonneg_float, default=1.0)
    p.add_argument("--lambda3", type=_nonneg_float, default=1.0)
    p.add_argument("--path-steps", type=_pos_int, default=8)
    p.add_argument("--track-steps", type=_pos_int, default=16)
    p.add_argument("--grid-size", type=_pos_int, default=9)
    p.add_argument("--extent", type=_pos_float, default=1.5)
    p.add_argument("--ramp-width", type=_pos_float, default=0.25)
    p.add_argument("--slices", type=_pos_int, default=2)
    p.add_argument("--radii", type=_float_list, default=None,
                   help="comma-separated radius grid (default: 8 log-spaced)")
    p.add_argument("--angles", type=_float_list, default=None,
                   help="comma-separated angle grid in radians (default: 12 over [0, pi))")
    p.add_argument("--r-min", type=_pos_float, default=None)
    p.add_argument("--r-max", type=_pos_float, default=None)
    p.add_argument("--step-r", type=_pos_float, default=0.05)
    p.add_argument("--step-angle", type=_pos_float, default=0.05)
    p.add_argument("--fd-h-r", type=_pos_float, default=1e-3)
    p.add_argument("--fd-h-angle", type=_pos_float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--robust", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--no-bifurc", action="store_true",
                   help="zero the branch loss weight and freeze half-angles at 0")
    p.add_argument("--no-track", action="store_true",
                   help="skip tracking damping; the augmented map equals the raw map")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vesselflow",
                                     description="tube enhancement toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic vascular scene")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=_pos_int, default=96)
    p.add_argument("--height", type=_pos_int, default=96)
    p.add_argument("--root-radius", type=_pos_float, default=5.0)
    p.add_argument("--radius-decay", type=_pos_float, default=0.78)
    p.add_argument("--branch-angle-min", type=_pos_float, default=25.0)
    p.add_argument("--branch-angle-max", type=_pos_float, default=50.0)
    p.add_argument("--min-radius", type=_pos_float, default=1.2)
    p.add_argument("--max-depth", type=_nonneg_int, default=5)
    p.add_argument("--contrast", type=_pos_float, default=0.8)
    p.add_argument("--sigma", type=_nonneg_float, default=0.0)
    p.add_argument("--invert", action="store_true")

    p = sub.add_parser("enhance", help="estimate vessel fields and score maps")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    _add_enhance_flags(p)

    p = sub.add_parser("frangi", help="multi-scale Hessian baseline")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigmas", type=_float_list, default=[1.0, 2.0, 3.0, 4.0])
    p.add_argument("--beta", type=_pos_float, default=0.5)
    p.add_argument("--c", type=_c_value, default=None,
                   help="sensitivity constant, or 'auto' for half the max Hessian norm")
    p.add_argument("--polarity", choices=("bright", "dark"), default="bright")

    p = sub.add_parser("eval", help="score a map against ground truth")
    p.add_argument("--scores", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fov", default=None)
    p.add_argument("--boxes", default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--threshold-from", default=None,
                   help="directory of training pairs (*/scores.tff + */gt.pgm)")
    p.add_argument("--dilation-radius", type=_pos_int, default=2)

    p = sub.add_parser("bench-noise", help="noise sweep: ours vs the baseline")
    p.add_argument("--out", required=True)
    p.add_argument("--train-scenes", type=_pos_int, default=5)
    p.add_argument("--test-scenes", type=_pos_int, default=5)
    p.add_argument("--sigmas", type=_float_list, default=list(DEFAULT_NOISE_SIGMAS))
    p.add_argument("--size", type=_pos_int, default=96)
    p.add_argument("--root-radius", type=_pos_float, default=5.0)
    p.add_argument("--min-radius", type=_pos_float, default=1.2)
    p.add_argument("--max-depth", type=_nonneg_int, default=3)
    p.add_argument("--contrast", type=_pos_float, default=0.8)
    _add_enhance_flags(p)

    p = sub.add_parser("replay", help="re-execute a recorded manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = vars(args)
    command = flags.pop("command")
    try:
        return COMMANDS[command](flags)
    except (ValueError, OSError) as exc:
        print(f"vesselflow {command}: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
