import json
from pathlib import Path

import numpy as np
import pytest

from vesselflow import field as fld
from vesselflow.cli import main


def dir_bytes(root: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(root.iterdir()) if p.is_file()}


def run(args):
    return main([str(a) for a in args])


SMALL_SYNTH = ["--width", "48", "--height", "48", "--root-radius", "2.0",
               "--min-radius", "0.9", "--max-depth", "2"]
FAST_ENHANCE = ["--iters", "1", "--radii", "1.0,1.6,2.5", "--angles",
                "0,0.5236,1.0472,1.5708,2.0944,2.618", "--r-min", "0.8", "--r-max", "4.0"]


def test_synth_writes_scene_and_manifest(tmp_path):
    out = tmp_path / "scene"
    assert run(["synth", "--out", out, "--seed", "7"] + SMALL_SYNTH) == 0
    for name in ("image.pgm", "mask.pgm", "segments.json", "bifurc_boxes.json",
                 "manifest.json"):
        assert (out / name).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "synth"
    assert manifest["flags"]["seed"] == 7


def test_synth_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        assert run(["synth", "--out", out, "--seed", "7", "--sigma", "0.1"] + SMALL_SYNTH) == 0
    bytes_a = dir_bytes(a)
    bytes_b = dir_bytes(b)
    del bytes_a["manifest.json"], bytes_b["manifest.json"]  # embeds the out path
    assert bytes_a == bytes_b


def test_synth_negative_sigma_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(["synth", "--out", tmp_path / "x", "--sigma", "-1"])
    assert exc.value.code == 2


def test_synth_depth_two_box_count(tmp_path):
    out = tmp_path / "scene"
    assert run(["synth", "--out", out, "--seed", "3", "--width", "72", "--height", "72",
                "--root-radius", "3.0", "--min-radius", "1.0", "--max-depth", "2"]) == 0
    boxes = json.loads((out / "bifurc_boxes.json").read_text())
    assert len(boxes) == 3


def test_synth_invert(tmp_path):
    plain = tmp_path / "p"
    inv = tmp_path / "i"
    assert run(["synth", "--out", plain, "--seed", "5"] + SMALL_SYNTH) == 0
    assert run(["synth", "--out", inv, "--seed", "5", "--invert"] + SMALL_SYNTH) == 0
    a = fld.read_pgm(plain / "image.pgm").data
    b = fld.read_pgm(inv / "image.pgm").data
    assert np.allclose(a + b, 1.0, atol=1.5 / 255)


def test_enhance_outputs_and_no_track(tmp_path):
    scene = tmp_path / "scene"
    run(["synth", "--out", scene, "--seed", "2"] + SMALL_SYNTH)
    out = tmp_path / "enh"
    assert run(["enhance", "--image", scene / "image.pgm", "--out", out,
                "--no-track"] + FAST_ENHANCE) == 0
    for name in ("params.tff", "vesselness.tff", "augmented.tff", "losses.jsonl",
                 "manifest.json"):
        assert (out / name).exists()
    v = fld.read_f32(out / "vesselness.tff")
    u = fld.read_f32(out / "augmented.tff")
    assert np.array_equal(v, u)  # tracking skipped
    params = fld.read_f32(out / "params.tff")
    assert params.shape == (48, 48, 4)


def test_enhance_zero_iters_empty_losses(tmp_path):
    scene = tmp_path / "scene"
    run(["synth", "--out", scene, "--seed", "2"] + SMALL_SYNTH)
    out = tmp_path / "enh"
    assert run(["enhance", "--image", scene / "image.pgm", "--out", out,
                "--iters", "0", "--radii", "1.0,2.0", "--angles", "0,0.8,1.6,2.4"]) == 0
    assert (out / "losses.jsonl").read_text() == ""


def test_enhance_missing_image_runtime_error(tmp_path):
    assert run(["enhance", "--image", tmp_path / "nope.pgm", "--out", tmp_path / "o",
                "--iters", "0"]) == 1


def test_frangi_command(tmp_path):
    scene = tmp_path / "scene"
    run(["synth", "--out", scene, "--seed", "2"] + SMALL_SYNTH)
    out = tmp_path / "fr"
    assert run(["frangi", "--image", scene / "image.pgm", "--out", out,
                "--sigmas", "1,2", "--c", "auto"]) == 0
    m = fld.read_f32(out / "frangi.tff")
    assert m.shape == (48, 48)
    assert m.max() > 0.0


def test_eval_perfect_scores(tmp_path):
    scene = tmp_path / "scene"
    run(["synth", "--out", scene, "--seed", "2"] + SMALL_SYNTH)
    out = tmp_path / "ev"
    assert run(["eval", "--scores", scene / "mask.pgm", "--gt", scene / "mask.pgm",
                "--out", out]) == 0
    report = json.loads((out / "report.json").read_text())
    for key in ("auc", "accuracy", "dice", "sensitivity", "specificity",
                "local_accuracy"):
        assert report[key] == 1.0
    assert "bb_dice" not in report


def test_eval_with_boxes_adds_bb_dice(tmp_path):
    scene = tmp_path / "scene"
    run(["synth", "--out", scene, "--seed", "3", "--width", "72", "--height", "72",
         "--root-radius", "3.0", "--min-radius", "1.0", "--max-depth", "2"])
    out = tmp_path / "ev"
    assert run(["eval", "--scores", scene / "mask.pgm", "--gt", scene / "mask.pgm",
                "--boxes", scene / "bifurc_boxes.json", "--out", out]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["bb_dice"] == 1.0


def test_eval_missing_gt_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(["eval", "--scores", tmp_path / "x.pgm", "--out", tmp_path / "o"])
    assert exc.value.code == 2


def test_eval_threshold_from_training_dir(tmp_path):
    scene = tmp_path / "scene"
    run(["synth", "--out", scene, "--seed", "2"] + SMALL_SYNTH)
    train = tmp_path / "train" / "case0"
    train.mkdir(parents=True)
    mask = fld.read_pgm(scene / "mask.pgm")
    fld.write_f32(train / "scores.tff", mask.data)
    fld.write_pgm(mask, train / "gt.pgm")
    out = tmp_path / "ev"
    assert run(["eval", "--scores", scene / "mask.pgm", "--gt", scene / "mask.pgm",
                "--threshold-from", tmp_path / "train", "--out", out]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["dice"] == 1.0
    assert report["threshold"] == 1.0


def test_bench_noise_csv_schema(tmp_path):
    out = tmp_path / "bench"
    assert run(["bench-noise", "--out", out, "--train-scenes", "1", "--test-scenes", "1",
                "--size", "40", "--root-radius", "1.5", "--min-radius", "0.8",
                "--max-depth", "1", "--sigmas", "0,0.1",
                "--iters", "0", "--radii", "1.0,1.5", "--angles", "0,0.8,1.6,2.4",
                "--r-min", "0.8", "--r-max", "4.0"]) == 0
    lines = (out / "bench.csv").read_text().splitlines()
    assert lines[0] == "method,sigma,threshold,dice,auc"
    assert len(lines) == 1 + 2 * 2  # 2 methods x 2 sigmas


def test_replay_reproduces_outputs(tmp_path):
    first = tmp_path / "first"
    assert run(["synth", "--out", first, "--seed", "9", "--sigma", "0.2"] + SMALL_SYNTH) == 0
    second = tmp_path / "second"
    assert run(["replay", first / "manifest.json", "--out", second]) == 0
    a = dir_bytes(first)
    b = dir_bytes(second)
    del a["manifest.json"], b["manifest.json"]
    assert a == b


def test_replay_enhance(tmp_path):
    scene = tmp_path / "scene"
    run(["synth", "--out", scene, "--seed", "2"] + SMALL_SYNTH)
    first = tmp_path / "e1"
    assert run(["enhance", "--image", scene / "image.pgm", "--out", first]
               + FAST_ENHANCE) == 0
    second = tmp_path / "e2"
    assert run(["replay", first / "manifest.json", "--out", second]) == 0
    a = dir_bytes(first)
    b = dir_bytes(second)
    del a["manifest.json"], b["manifest.json"]
    assert a == b


def test_enhance_end_to_end_dice(tmp_path):
    scene = tmp_path / "scene"
    run(["synth", "--out", scene, "--seed", "21", "--width", "64", "--height", "64",
         "--root-radius", "1.6", "--min-radius", "0.8", "--max-depth", "3"])
    out = tmp_path / "enh"
    assert run(["enhance", "--image", scene / "image.pgm", "--out", out,
                "--iters", "2", "--lambda2", "0", "--no-bifurc",
                "--r-min", "0.7", "--r-max", "5.0"]) == 0
    ev = tmp_path / "ev"
    assert run(["eval", "--scores", out / "augmented.tff", "--gt", scene / "mask.pgm",
                "--out", ev]) == 0
    report = json.loads((ev / "report.json").read_text())
    assert report["dice"] >= 0.8


def test_bench_noise_default_sigmas():
    from vesselflow.cli import build_parser
    ns = build_parser().parse_args(["bench-noise", "--out", "x"])
    assert ns.sigmas == [0.0, 0.1, 0.2, 0.3, 0.4]
