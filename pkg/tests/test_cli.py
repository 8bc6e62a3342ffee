import io
import json
import logging
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from app.imaging.io import read_pfm, read_png, write_pfm
from app.utils.logging_utils import get_logger, set_level
from cli.main import main

SMALL_GEN = ["--views", "8", "--res", "32x24", "--planes", "2"]


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv("DUALCAM_SEED", raising=False)


# --------------------------
# GEN / EVAL
# --------------------------

def test_gen_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["gen", "--out", str(a), "--seed", "3"] + SMALL_GEN) == 0
    assert main(["gen", "--out", str(b), "--seed", "3"] + SMALL_GEN) == 0
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    for png in sorted(a.rglob("*.png")):
        assert png.read_bytes() == (b / png.relative_to(a)).read_bytes(), png.name


def test_gen_rejects_unknown_keys(tmp_path):
    assert main(["gen", "--out", str(tmp_path), "--set", "NOT_A_KEY=1"]) == 2
    assert main(["gen", "--out", str(tmp_path), "--set", "SEED"]) == 2
    assert main(["gen", "--out", str(tmp_path), "--res", "big"]) == 2


def test_eval_of_identical_dirs(tiny_dataset, tmp_path, capsys):
    out, manifest = tiny_dataset
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    pred.mkdir(), gt.mkdir()
    for view in manifest.views[:3]:
        shutil.copy(out / view.files["gt_aif"], pred / f"{view.index:03d}.png")
        shutil.copy(out / view.files["gt_aif"], gt / f"{view.index:03d}.png")

    assert main(["eval", "--pred", str(pred), "--gt", str(gt)]) == 0
    frame = pd.read_csv(io.StringIO(capsys.readouterr().out))
    assert len(frame) == 4
    mean = frame[frame["view"] == "mean"].iloc[0]
    assert mean["psnr"] == pytest.approx(99.0)
    assert mean["ssim"] == pytest.approx(1.0, abs=1e-6)


def test_eval_reports_unmatched_files(tiny_dataset, tmp_path):
    out, manifest = tiny_dataset
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    pred.mkdir(), gt.mkdir()
    shutil.copy(out / manifest.views[0].files["gt"], gt / "000.png")
    assert main(["eval", "--pred", str(pred), "--gt", str(gt)]) == 3


# --------------------------
# ALIGN / TRAIN
# --------------------------

def test_align_single_pair(tiny_dataset, tmp_path):
    out, manifest = tiny_dataset
    view = manifest.view(manifest.train[0])
    target = tmp_path / "pair"
    code = main([
        "align", "--main", str(out / view.files["main"]), "--ultra", str(out / view.files["ultra"]),
        "--out-dir", str(target), "--set", "RANSAC_ITERS=300",
    ])
    assert code == 0
    for name in ("aligned.png", "mask.png", "flow_dx.pfm", "flow_dy.pfm", "homography.json"):
        assert (target / name).is_file(), name
    assert len(json.loads((target / "homography.json").read_text())) == 9
    assert read_pfm(target / "flow_dx.pfm").shape == (manifest.height, manifest.width)


def test_align_pair_needs_both_images(tiny_dataset, tmp_path):
    out, manifest = tiny_dataset
    view = manifest.view(manifest.train[0])
    assert main(["align", "--main", str(out / view.files["main"])]) == 2


def test_stage_two_needs_stage_one(aligned_dataset, tmp_path):
    dataset, _ = aligned_dataset
    code = main(["train", "--dataset", str(dataset), "--bundle", str(tmp_path / "bundle"), "--stage", "2"])
    assert code == 3


# --------------------------
# RENDER / REFOCUS / BOKEH
# --------------------------

def test_render_writes_image_and_disparity(trained_bundle, tmp_path):
    target = tmp_path / "view.png"
    code = main([
        "render", "--bundle", str(trained_bundle), "--view", "0", "--out", str(target),
        "--defocus", str(tmp_path / "defocus.pfm"), "--blend-mask", str(tmp_path / "eta.png"),
    ])
    assert code == 0
    image = read_png(target)
    assert image.shape == (36, 48, 3)
    assert read_pfm(target.with_suffix(".pfm")).shape == (36, 48)
    assert read_pfm(tmp_path / "defocus.pfm").min() >= 0.0
    assert (tmp_path / "eta.png").is_file()


def test_refocus_without_aperture_matches_render(trained_bundle, tmp_path):
    sharp, refocused = tmp_path / "sharp.png", tmp_path / "refocus.png"
    assert main(["render", "--bundle", str(trained_bundle), "--view", "1", "--out", str(sharp)]) == 0
    code = main([
        "refocus", "--bundle", str(trained_bundle), "--view", "1", "--out", str(refocused),
        "--aperture", "0", "--focus", "0.5",
    ])
    assert code == 0
    assert np.max(np.abs(read_png(sharp).data - read_png(refocused).data)) <= 1.0 / 255.0 + 1e-9


def test_render_unknown_view(trained_bundle, tmp_path):
    code = main(["render", "--bundle", str(trained_bundle), "--view", "99", "--out", str(tmp_path / "x.png")])
    assert code == 3


def test_negative_aperture_is_rejected(trained_bundle, tmp_path):
    code = main([
        "refocus", "--bundle", str(trained_bundle), "--view", "0", "--out", str(tmp_path / "x.png"),
        "--aperture", "-1", "--focus", "0.5",
    ])
    assert code == 3


def test_bokeh_command(tiny_dataset, tmp_path):
    out, manifest = tiny_dataset
    view = manifest.views[0]
    image, disparity = out / view.files["gt_aif"], out / view.files["disparity"]

    same = tmp_path / "same.png"
    assert main([
        "bokeh", "--image", str(image), "--disparity", str(disparity),
        "--aperture", "0", "--focus", "0.5", "--out", str(same),
    ]) == 0
    assert np.max(np.abs(read_png(same).data - read_png(image).data)) <= 1.0 / 255.0 + 1e-9

    blurred, radius = tmp_path / "blurred.png", tmp_path / "radius.pfm"
    assert main([
        "bokeh", "--image", str(image), "--disparity", str(disparity),
        "--aperture", "4", "--focus", str(manifest.truth.D_f), "--out", str(blurred),
        "--defocus-out", str(radius),
    ]) == 0
    expected = 4.0 * np.abs(manifest.truth.D_f - read_pfm(disparity))
    np.testing.assert_allclose(read_pfm(radius), expected, atol=1e-4)


def test_bokeh_shape_mismatch(tiny_dataset, tmp_path):
    out, manifest = tiny_dataset
    wrong = tmp_path / "wrong.pfm"
    write_pfm(wrong, np.zeros((5, 5)))
    code = main([
        "bokeh", "--image", str(out / manifest.views[0].files["gt_aif"]), "--disparity", str(wrong),
        "--aperture", "2", "--focus", "0.5", "--out", str(tmp_path / "x.png"),
    ])
    assert code == 3


def test_missing_input_file(tmp_path):
    code = main([
        "bokeh", "--image", str(tmp_path / "nope.png"), "--disparity", str(tmp_path / "nope.pfm"),
        "--aperture", "2", "--focus", "0.5", "--out", str(tmp_path / "x.png"),
    ])
    assert code == 3


def test_quiet_flag_raises_log_level(tmp_path):
    root = get_logger()
    try:
        assert main(["gen", "--quiet", "--out", str(tmp_path), "--set", "NOT_A_KEY=1"]) == 2
        assert root.level == logging.WARNING
    finally:
        set_level(logging.INFO)


def test_split_with_equal_foci_matches_refocus(trained_bundle, tmp_path):
    refocused, split = tmp_path / "refocus.png", tmp_path / "split.png"
    common = ["--bundle", str(trained_bundle), "--view", "2", "--aperture", "3"]
    assert main(["refocus", *common, "--focus", "0.4", "--out", str(refocused)]) == 0
    assert main(["split", *common, "--near", "0.4", "--far", "0.4", "--out", str(split)]) == 0
    np.testing.assert_array_equal(read_png(split).data, read_png(refocused).data)


def test_malformed_env_only_fails_commands_that_load_settings(monkeypatch, tmp_path):
    monkeypatch.setenv("DUALCAM_SEED", "abc")
    root = Path(__file__).resolve().parents[1]
    shown = subprocess.run([sys.executable, "-m", "cli.main", "--help"], cwd=root, capture_output=True, text=True)
    assert shown.returncode == 0
    assert "gen" in shown.stdout
    assert main(["gen", "--out", str(tmp_path)] + SMALL_GEN) == 2
