"""
dualcam command line: generate, align, train, render, refocus, split, bokeh, eval.

Every command takes --config (flat key=value file) and repeated --set KEY=VALUE
overrides; the process exit code follows app.utils.error_handler
(0 ok, 2 usage, 3 data/format, 4 numeric).
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from app.config import Settings, dump_settings, load_settings, settings_dict
from app.utils.error_handler import EXIT_OK, ConfigError, DatasetError, ShapeError, handle_exception
from app.utils.logging_utils import get_logger, set_level

logger = get_logger("cli")
console = Console(stderr=True)

STAGE_CHOICES = ("1", "2", "3", "all")


# --------------------------
# HELPERS
# --------------------------

def _parse_overrides(pairs: Optional[List[str]]) -> Dict[str, str]:
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects KEY=VALUE, got '{pair}'")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _parse_resolution(text: str):
    try:
        width, height = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"--res expects WIDTHxHEIGHT, got '{text}'") from None
    return width, height


def _settings(args, **flags) -> Settings:
    overrides = _parse_overrides(getattr(args, "set", None))
    overrides.update({k: v for k, v in flags.items() if v is not None})
    return load_settings(getattr(args, "config", None), overrides)


def _print_table(title: str, frame: pd.DataFrame) -> None:
    table = Table(title=title)
    for column in frame.columns:
        table.add_column(str(column))
    for row in frame.itertuples(index=False):
        table.add_row(*[f"{v:.4f}" if isinstance(v, float) else str(v) for v in row])
    console.print(table)


def _camera(args, scene):
    from app.models.data_models import CameraRecord
    from app.radiance.camera import CameraModel

    if args.pose is not None:
        try:
            record = CameraRecord.model_validate(json.loads(Path(args.pose).read_text()))
        except (OSError, ValueError) as exc:
            raise DatasetError(f"cannot read pose file {args.pose}: {exc}") from exc
        return CameraModel.from_record(record)
    if not 0 <= args.view < len(scene.cameras):
        raise DatasetError(f"unknown view id {args.view} (bundle has {len(scene.cameras)} views)")
    return scene.cameras[args.view]


# --------------------------
# COMMANDS
# --------------------------

def cmd_gen(args) -> int:
    from app.scenegen import GeneratorOptions, build_scene, emit_dataset

    width, height = _parse_resolution(args.res) if args.res else (None, None)
    settings = _settings(args, SEED=args.seed, VIEWS=args.views, WIDTH=width, HEIGHT=height)
    out = Path(args.out or settings.DATASET_DIR)
    spec = build_scene(settings.SEED, args.planes, settings.GEN_DF)
    options = GeneratorOptions(
        views=settings.VIEWS, width=settings.WIDTH, height=settings.HEIGHT,
        A=settings.GEN_A, D_f=settings.GEN_DF, ultra_blur=settings.ULTRA_BLUR,
        ultra_fov_ratio=settings.ULTRA_FOV_RATIO, ultra_offset=settings.ULTRA_OFFSET,
        gamma=settings.GAMMA, beta=settings.BETA,
    )
    manifest = emit_dataset(spec, out, settings.SEED, options)
    logger.info(f"gen: seed {settings.SEED}, {len(manifest.train)}/{len(manifest.test)} views -> {out}")
    return EXIT_OK


def _align_pair_files(args, settings) -> int:
    from app.align.pipeline import align_pair
    from app.imaging.io import read_png, write_mask_png, write_pfm, write_png

    if not (args.ultra and args.out_dir):
        raise ConfigError("align --main also needs --ultra and --out-dir")
    pair = align_pair(read_png(args.main), read_png(args.ultra), settings.align_options())
    out = Path(args.out_dir)
    write_png(out / "aligned.png", pair.aligned)
    write_mask_png(out / "mask.png", pair.mask)
    write_pfm(out / "flow_dx.pfm", pair.flow[..., 0])
    write_pfm(out / "flow_dy.pfm", pair.flow[..., 1])
    (out / "homography.json").write_text(json.dumps(pair.homography.to_list()))
    logger.info(f"align: {pair.confident_fraction:.3f} confident -> {out}")
    return EXIT_OK


def cmd_align(args) -> int:
    from app.align.dataset import align_dataset

    settings = _settings(args)
    if args.main:
        return _align_pair_files(args, settings)
    dataset = Path(args.dataset or settings.DATASET_DIR)
    rows = align_dataset(dataset, settings.align_options())
    _print_table(f"alignment: {dataset}", pd.DataFrame(rows))
    return EXIT_OK


def cmd_train(args) -> int:
    from app.fusion.trainer import TrainOptions, run_stage

    settings = _settings(args)
    dataset = Path(args.dataset or settings.DATASET_DIR)
    bundle = Path(args.bundle or settings.BUNDLE_DIR)
    stages = [1, 2, 3] if args.stage == "all" else [int(args.stage)]
    plan, config = settings.stage_plan(), settings.field_config()
    options = TrainOptions.from_settings(settings)
    dump_settings(settings, bundle / "config.env")
    for stage in stages:
        logger.info(f"train: stage {stage} on {dataset}, seed {plan.seed}")
        run_stage(stage, dataset, bundle, plan, config, options, settings_dict(settings))
    return EXIT_OK


def _render_outputs(args):
    from app.fusion.scene import FusedScene

    settings = _settings(args)
    scene, _ = FusedScene.load(args.bundle or settings.BUNDLE_DIR)
    return settings, scene, _camera(args, scene)


def cmd_render(args) -> int:
    from app.bokeh.defocus import defocus_map
    from app.fusion.inference import render_outputs
    from app.imaging.image import Image
    from app.imaging.io import write_pfm, write_png

    _, scene, cam = _render_outputs(args)
    out = render_outputs(scene, cam)
    target = Path(args.out)
    write_png(target, Image(out.main if args.main_only else out.fused))
    write_pfm(target.with_suffix(".pfm"), out.disparity_fused)
    if args.blend_mask:
        write_png(args.blend_mask, Image(np.clip(out.blend, 0.0, 1.0)))
    if args.defocus:
        write_pfm(args.defocus, defocus_map(scene.defocus, out.disparity_fused).data)
    logger.info(f"render: {target} ({scene.defocus})")
    return EXIT_OK


def cmd_refocus(args) -> int:
    from app.fusion.inference import refocus
    from app.imaging.io import write_png

    settings, scene, cam = _render_outputs(args)
    write_png(args.out, refocus(scene, cam, args.aperture, args.focus, settings.GAMMA))
    logger.info(f"refocus: A={args.aperture}, D_f={args.focus} -> {args.out}")
    return EXIT_OK


def cmd_split(args) -> int:
    from app.fusion.inference import split_diopter
    from app.imaging.io import write_png

    settings, scene, cam = _render_outputs(args)
    write_png(args.out, split_diopter(scene, cam, args.aperture, args.near, args.far, settings.GAMMA))
    logger.info(f"split: A={args.aperture}, foci ({args.near}, {args.far}) -> {args.out}")
    return EXIT_OK


def cmd_bokeh(args) -> int:
    from app.bokeh.defocus import DefocusParams, coc_radius
    from app.bokeh.scatter import scatter_render
    from app.imaging.io import read_pfm, read_png, write_pfm, write_png

    settings = _settings(args)
    sharp = read_png(args.image)
    disparity = read_pfm(args.disparity)
    if disparity.ndim == 3:
        disparity = disparity[..., 0]
    if disparity.shape != sharp.shape[:2]:
        raise ShapeError(f"disparity {disparity.shape} does not match image {sharp.shape[:2]}")
    params = DefocusParams.create(args.aperture, args.focus, trainable=False)
    radius = coc_radius(params, disparity).data
    write_png(args.out, scatter_render(sharp, radius, settings.GAMMA, settings.BETA, settings.R_MIN))
    if args.defocus_out:
        write_pfm(args.defocus_out, radius)
    logger.info(f"bokeh: A={args.aperture}, D_f={args.focus}, max radius {radius.max():.2f}px -> {args.out}")
    return EXIT_OK


def evaluate_dirs(pred_dir, gt_dir) -> pd.DataFrame:
    """PSNR/SSIM per PNG present in both directories, plus a mean row."""
    from app.imaging.io import read_png
    from app.imaging.metrics import psnr, ssim

    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    pred = {p.name for p in pred_dir.glob("*.png")}
    gt = {p.name for p in gt_dir.glob("*.png")}
    if pred != gt or not pred:
        missing = sorted((gt - pred) | (pred - gt))
        raise DatasetError(f"prediction and ground-truth sets differ; unmatched files: {missing or 'no PNGs'}")
    rows = []
    for name in sorted(pred):
        a, b = read_png(pred_dir / name), read_png(gt_dir / name)
        rows.append({"view": Path(name).stem, "psnr": psnr(a, b), "ssim": ssim(a, b)})
    frame = pd.DataFrame(rows)
    mean = {"view": "mean", "psnr": float(frame["psnr"].mean()), "ssim": float(frame["ssim"].mean())}
    return pd.concat([frame, pd.DataFrame([mean])], ignore_index=True)


def cmd_eval(args) -> int:
    frame = evaluate_dirs(args.pred, args.gt)
    text = frame.to_csv(index=False, float_format="%.6f")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    _print_table("evaluation", frame)
    return EXIT_OK


# --------------------------
# PARSER
# --------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualcam", description="Dual-camera all-in-focus radiance fields")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("-q", "--quiet", action="store_true", help="log warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    gen.add_argument("--out")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--views", type=int)
    gen.add_argument("--res", help="WIDTHxHEIGHT")
    gen.add_argument("--planes", type=int, help="plane count in [2, 5]")
    gen.set_defaults(func=cmd_gen)

    align = sub.add_parser("align", parents=[common], help="align ultra-wide views to the main views")
    align.add_argument("--dataset")
    align.add_argument("--main", help="main PNG; aligns a single pair instead of a dataset")
    align.add_argument("--ultra", help="ultra-wide PNG of the pair")
    align.add_argument("--out-dir", help="output directory of the pair artifacts")
    align.set_defaults(func=cmd_align)

    train = sub.add_parser("train", parents=[common], help="run training stages")
    train.add_argument("--dataset")
    train.add_argument("--bundle")
    train.add_argument("--stage", choices=STAGE_CHOICES, default="all")
    train.set_defaults(func=cmd_train)

    def view_args(p):
        p.add_argument("--bundle")
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("--view", type=int)
        group.add_argument("--pose", help="JSON camera record")
        p.add_argument("--out", required=True)

    render = sub.add_parser("render", parents=[common], help="all-in-focus render (+ disparity PFM)")
    view_args(render)
    render.add_argument("--main-only", action="store_true", help="render the main field alone")
    render.add_argument("--blend-mask", help="also write the composited eta as PNG")
    render.add_argument("--defocus", help="also write the defocus map as PFM")
    render.set_defaults(func=cmd_render)

    refocus = sub.add_parser("refocus", parents=[common], help="synthetic refocus")
    view_args(refocus)
    refocus.add_argument("--aperture", type=float, required=True)
    refocus.add_argument("--focus", type=float, required=True)
    refocus.set_defaults(func=cmd_refocus)

    split = sub.add_parser("split", parents=[common], help="split-diopter effect")
    view_args(split)
    split.add_argument("--aperture", type=float, required=True)
    split.add_argument("--near", type=float, required=True)
    split.add_argument("--far", type=float, required=True)
    split.set_defaults(func=cmd_split)

    bokeh = sub.add_parser("bokeh", parents=[common], help="render bokeh from a sharp image and its disparity")
    bokeh.add_argument("--image", required=True, help="sharp PNG")
    bokeh.add_argument("--disparity", required=True, help="disparity PFM")
    bokeh.add_argument("--aperture", type=float, required=True)
    bokeh.add_argument("--focus", type=float, required=True)
    bokeh.add_argument("--out", required=True)
    bokeh.add_argument("--defocus-out", help="also write the blur-radius map as PFM")
    bokeh.set_defaults(func=cmd_bokeh)

    evaluate = sub.add_parser("eval", parents=[common], help="PSNR/SSIM of predictions against ground truth")
    evaluate.add_argument("--pred", required=True)
    evaluate.add_argument("--gt", required=True)
    evaluate.add_argument("--out", help="CSV output (default: stdout)")
    evaluate.set_defaults(func=cmd_eval)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.quiet:
        set_level(logging.WARNING)
    try:
        return args.func(args)
    except Exception as exc:
        return handle_exception(exc, f"dualcam {args.command}")


if __name__ == "__main__":
    sys.exit(main())
