"""
Dataset emission: camera arc, per-view renders and degradations, manifest.

Layout (all paths relative to manifest.json):

    manifest.json
    views/000/main.png      main camera focused at the generator's D_f
    views/000/main_fg.png   main camera focused on the front plane
    views/000/main_bg.png   main camera focused on the background
    views/000/ultra.png     ultra-wide capture (offset, wider FoV, colour curve)
    views/000/gt.png        multi-focus fusion of main_fg / main_bg
    views/000/gt_aif.png    analytic all-in-focus render
    views/000/disp.pfm      exact disparity of the main view
    views/000/layers.pfm    plane index per pixel
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from app.bokeh.defocus import BETA
from app.imaging.focus import multifocus_fuse
from app.imaging.image import DEFAULT_GAMMA
from app.imaging.io import write_pfm, write_png
from app.models.data_models import (
    CameraRecord,
    DatasetManifest,
    GeneratorTruth,
    SceneSpec,
    ViewRecord,
    save_manifest,
)
from app.radiance.camera import CameraModel, look_at
from app.scenegen.degrade import ULTRA_BLUR_RADIUS, ColorCurve, simulate_main, simulate_ultra
from app.scenegen.scene import FOV_X_DEG, render_layers
from app.utils.logging_utils import get_logger
from app.utils.random_utils import substream

logger = get_logger("scenegen.dataset")

DEFAULT_VIEWS = 24
DEFAULT_WIDTH = 96
DEFAULT_HEIGHT = 72
ARC_DEG = 30.0
ULTRA_FOV_RATIO = 1.35
ULTRA_OFFSET_FRACTION = 0.02
BOUNDS_MARGIN = 0.1
TEST_EVERY = 8


@dataclass(frozen=True)
class GeneratorOptions:
    views: int = DEFAULT_VIEWS
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    A: float = 4.0
    D_f: Optional[float] = None
    ultra_blur: float = ULTRA_BLUR_RADIUS
    ultra_fov_ratio: float = ULTRA_FOV_RATIO
    ultra_offset: float = ULTRA_OFFSET_FRACTION
    gamma: float = DEFAULT_GAMMA
    beta: float = BETA
    workers: int = 4


def split_views(n_views: int) -> Tuple[List[int], List[int]]:
    """floor(7/8·n) training views; every 8th view (from 0) is held out."""
    test = [i for i in range(n_views) if i % TEST_EVERY == 0]
    train = [i for i in range(n_views) if i % TEST_EVERY != 0]
    return train, test


def camera_arc(
    spec: SceneSpec,
    n_views: int,
    width: int,
    height: int,
    fov_ratio: float = ULTRA_FOV_RATIO,
    offset_fraction: float = ULTRA_OFFSET_FRACTION,
) -> List[Tuple[CameraModel, CameraModel]]:
    """
    (main, ultra) camera pairs on a horizontal arc around the front plane's
    center; the arc is centered on the reference camera at the origin. The
    ultra-wide camera shares the orientation, sits `offset_fraction` of the
    scene depth to the right and has a `fov_ratio` times wider field of view.
    """
    front = spec.foreground
    pivot = np.array([front.center[0], front.center[1], front.depth])
    radius = front.depth
    angles = np.radians(np.linspace(-ARC_DEG / 2, ARC_DEG / 2, n_views)) if n_views > 1 else np.zeros(1)
    baseline = offset_fraction * spec.background.depth
    pairs = []
    for theta in angles:
        eye = pivot + radius * np.array([np.sin(theta), 0.0, -np.cos(theta)])
        rotation = look_at(eye, pivot)
        main = CameraModel.from_fov(width, height, FOV_X_DEG, rotation=rotation, translation=eye)
        ultra = CameraModel(
            main.fx / fov_ratio, main.fy / fov_ratio, main.cx, main.cy, width, height,
            rotation=rotation, translation=eye + baseline * rotation[:, 0],
        )
        pairs.append((main, ultra))
    return pairs


def _record(cam: CameraModel) -> CameraRecord:
    return CameraRecord(**cam.to_record())


def emit_dataset(spec: SceneSpec, out_dir, seed: int, options: Optional[GeneratorOptions] = None) -> DatasetManifest:
    """Writes every view of `spec` under `out_dir` and returns the validated manifest."""
    options = options or GeneratorOptions()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    curve = ColorCurve.random(substream(seed, "scenegen.curve"))
    D_f = spec.foreground.disparity if options.D_f is None else float(options.D_f)
    D_fg, D_bg = spec.foreground.disparity, spec.background.disparity

    pairs = camera_arc(spec, options.views, options.width, options.height,
                       options.ultra_fov_ratio, options.ultra_offset)
    renders = [(render_layers(spec, main), render_layers(spec, ultra)) for main, ultra in pairs]
    near = (1.0 - BOUNDS_MARGIN) * min(min(m.distance.min(), u.distance.min()) for m, u in renders)
    far = (1.0 + BOUNDS_MARGIN) * max(max(m.distance.max(), u.distance.max()) for m, u in renders)
    train, test = split_views(options.views)
    logger.info(
        f"generating {options.views} views ({len(train)}/{len(test)} split) at "
        f"{options.width}x{options.height}, A*={options.A}, D_f*={D_f:.3f}, bounds [{near:.3f}, {far:.3f}]"
    )

    def emit_view(index: int) -> ViewRecord:
        main_cam, ultra_cam = (cam.with_bounds(near, far) for cam in pairs[index])
        main_render, ultra_render = renders[index]
        aif, disparity = main_render.image, main_render.disparity

        def capture(focus: float):
            return simulate_main(aif, disparity, options.A, focus, options.gamma, options.beta)

        main_fg = capture(D_fg)
        main_bg = capture(D_bg)
        main = main_fg if D_f == D_fg else capture(D_f)
        ultra = simulate_ultra(ultra_render.image, curve, options.ultra_blur, options.gamma, options.beta)
        _, gt = multifocus_fuse(main_fg, main_bg)

        rel = Path("views") / f"{index:03d}"
        files = {
            "main": rel / "main.png", "main_fg": rel / "main_fg.png", "main_bg": rel / "main_bg.png",
            "ultra": rel / "ultra.png", "gt": rel / "gt.png", "gt_aif": rel / "gt_aif.png",
            "disparity": rel / "disp.pfm", "layers": rel / "layers.pfm",
        }
        for key, img in (("main", main), ("main_fg", main_fg), ("main_bg", main_bg),
                         ("ultra", ultra), ("gt", gt), ("gt_aif", aif)):
            write_png(out_dir / files[key], img)
        write_pfm(out_dir / files["disparity"], disparity)
        write_pfm(out_dir / files["layers"], main_render.layers.astype(np.float64))
        return ViewRecord(
            index=index,
            split="train" if index in train else "test",
            main_camera=_record(main_cam),
            ultra_camera=_record(ultra_cam),
            files={key: path.as_posix() for key, path in files.items()},
        )

    with ThreadPoolExecutor(max_workers=max(1, options.workers)) as pool:
        views = list(pool.map(emit_view, range(options.views)))

    manifest = DatasetManifest(
        scene_id=f"scene-{spec.seed:04d}",
        seed=seed,
        width=options.width,
        height=options.height,
        views=views,
        train=train,
        test=test,
        truth=GeneratorTruth(
            A_main=options.A,
            D_f=D_f,
            D_f_fg=D_fg,
            D_f_bg=D_bg,
            color_curve=curve.to_record(),
            ultra_blur_radius=options.ultra_blur,
            ultra_offset=[options.ultra_offset * spec.background.depth, 0.0, 0.0],
            ultra_fov_ratio=options.ultra_fov_ratio,
        ),
        scene=spec,
    )
    save_manifest(manifest, out_dir / "manifest.json")
    logger.info(f"dataset written to {out_dir}")
    return manifest
