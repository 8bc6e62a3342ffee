"""
Three-stage optimization.

    stage 1  main field on every main-image ray, ultra-wide field on the
             aligned ultra-wide rays gated by the confidence mask
    stage 2  (A, D_f) through the focus loss on rendered patches, fields frozen
    stage 3  eta head through the fusion loss against the blend target,
             everything else frozen

Stages hand over through the bundle directory; a stage refuses to start
when its predecessor's checkpoint is missing.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from app.align.dataset import load_aligned
from app.bokeh.defocus import A_INIT, BETA, DF_INIT, DefocusParams, defocus_map, normalize_map
from app.bokeh.scatter import R_MIN
from app.diffcore.optim import BASE_LR, DECAY_STEPS, AdamState, adam_step
from app.diffcore.tensor import backward
from app.fusion.inference import RENDER_CHUNK, render_outputs
from app.fusion.losses import blend_target, focus_loss, fusion_loss
from app.fusion.render import fused_volume_render
from app.fusion.scene import FusedScene
from app.imaging.image import DEFAULT_GAMMA
from app.imaging.io import read_png
from app.models.data_models import BundleManifest, DatasetManifest, StagePlan, load_manifest
from app.radiance.camera import CameraModel, Rays, generate_rays, pixel_grid
from app.radiance.field import FieldConfig
from app.radiance.render import recon_loss, sample_field, volume_render_color
from app.radiance.sampling import stratified_sample
from app.utils.error_handler import ParameterError, StageOrderError
from app.utils.logging_utils import get_logger
from app.utils.random_utils import substream

logger = get_logger("fusion.trainer")

LOG_EVERY = 100
DEFOCUS_LR = 1e-2


@dataclass(frozen=True)
class TrainOptions:
    learning_rate: float = BASE_LR
    decay_steps: int = DECAY_STEPS
    defocus_lr: float = DEFOCUS_LR
    log_every: int = LOG_EVERY
    samples: int = 32
    lindisp: bool = True
    A_init: float = A_INIT
    Df_init: float = DF_INIT
    gamma: float = DEFAULT_GAMMA
    beta: float = BETA
    r_min: float = R_MIN
    use_confidence: bool = True
    use_focus_loss: bool = True
    blend_source: str = "learned"
    render_chunk: int = RENDER_CHUNK

    @classmethod
    def from_settings(cls, settings) -> "TrainOptions":
        return cls(
            learning_rate=settings.LEARNING_RATE,
            decay_steps=settings.LR_DECAY_STEPS,
            defocus_lr=settings.DEFOCUS_LR,
            log_every=settings.LOG_EVERY,
            samples=settings.SAMPLES_PER_RAY,
            lindisp=settings.SAMPLE_LINDISP,
            A_init=settings.A_INIT,
            Df_init=settings.DF_INIT,
            gamma=settings.GAMMA,
            beta=settings.BETA,
            r_min=settings.R_MIN,
            use_confidence=settings.USE_CONFIDENCE,
            use_focus_loss=settings.USE_FOCUS_LOSS,
            blend_source=settings.BLEND_SOURCE,
            render_chunk=settings.RENDER_CHUNK,
        )


# --------------------------
# TRAINING DATA
# --------------------------

@dataclass
class TrainingData:
    """Every training-view pixel as a ray with its main and aligned ultra-wide colours."""
    rays: Rays
    main_colors: np.ndarray    # N x 3
    ultra_colors: np.ndarray   # N x 3
    confidence: np.ndarray     # N, bool
    views: List[int]
    cameras: List[CameraModel]
    height: int
    width: int

    @property
    def num_rays(self) -> int:
        return len(self.rays)

    def view_slice(self, position: int) -> slice:
        size = self.height * self.width
        return slice(position * size, (position + 1) * size)

    def view_image(self, values: np.ndarray, position: int) -> np.ndarray:
        part = values[self.view_slice(position)]
        return part.reshape((self.height, self.width) + part.shape[1:])


def load_training_data(dataset_dir, manifest: Optional[DatasetManifest] = None) -> TrainingData:
    """Raises DatasetError when a training view has no alignment artifacts."""
    dataset_dir = Path(dataset_dir)
    manifest = manifest or load_manifest(dataset_dir)
    origins, directions, axial, mains, ultras, masks, cameras = [], [], [], [], [], [], []
    for index in manifest.train:
        record = manifest.view(index)
        cam = CameraModel.from_record(record.main_camera)
        aligned, mask = load_aligned(dataset_dir, manifest, index)
        rays = generate_rays(cam, pixel_grid(cam))
        origins.append(rays.origins)
        directions.append(rays.directions)
        axial.append(rays.axial)
        mains.append(read_png(dataset_dir / record.files["main"]).data.reshape(-1, 3))
        ultras.append(aligned.data.reshape(-1, 3))
        masks.append(mask.reshape(-1))
        cameras.append(cam)
    return TrainingData(
        rays=Rays(np.concatenate(origins), np.concatenate(directions), np.concatenate(axial)),
        main_colors=np.concatenate(mains),
        ultra_colors=np.concatenate(ultras),
        confidence=np.concatenate(masks),
        views=list(manifest.train),
        cameras=cameras,
        height=manifest.height,
        width=manifest.width,
    )


def scene_from_dataset(
    manifest: DatasetManifest, config: FieldConfig, seed: int, options: TrainOptions
) -> FusedScene:
    """Fresh scene whose encoding frame covers the dataset's bounds."""
    cameras = [CameraModel.from_record(v.main_camera) for v in manifest.views]
    near = min(c.near for c in cameras)
    far = max(c.far for c in cameras)
    eyes = np.stack([c.translation for c in cameras])
    axis = np.mean([c.optical_axis for c in cameras], axis=0)
    center = eyes.mean(axis=0) + axis / np.linalg.norm(axis) * 0.5 * (near + far)
    scale = 0.5 * (far - near) + float(np.max(np.linalg.norm(eyes - eyes.mean(axis=0), axis=1)))
    return FusedScene.create(
        config, seed, near, far, center, scale, options.A_init, options.Df_init,
        cameras, options.samples, options.lindisp,
    )


# --------------------------
# METRICS
# --------------------------

class MetricsLog:
    """Rows every `log_every` iterations, written as CSV text."""

    def __init__(self, stage: int, log_every: int = LOG_EVERY):
        self.stage = stage
        self.log_every = log_every
        self.rows: List[Dict[str, float]] = []

    def due(self, iteration: int) -> bool:
        return (iteration + 1) % self.log_every == 0

    def record(self, iteration: int, **values) -> None:
        row = {"stage": self.stage, "iteration": iteration + 1, **{k: float(v) for k, v in values.items()}}
        self.rows.append(row)
        logger.info(
            f"stage {self.stage} iter {iteration + 1}: "
            + ", ".join(f"{k}={v:.6g}" for k, v in values.items())
        )

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame().to_csv(path, index=False)
        return path


def _sample_t(scene: FusedScene, n: int, rng: np.random.Generator) -> np.ndarray:
    return stratified_sample(scene.near, scene.far, scene.samples, jitter=True, seed=rng,
                             n_rays=n, lindisp=scene.lindisp)


# --------------------------
# STAGE 1
# --------------------------

def train_stage1(scene: FusedScene, data: TrainingData, plan: StagePlan, options: TrainOptions) -> MetricsLog:
    scene.set_stage(plan, 1)
    rng = substream(plan.seed, "fusion.stage1")
    state_main = AdamState(options.learning_rate, options.decay_steps)
    state_ultra = AdamState(options.learning_rate, options.decay_steps)
    gate = data.confidence if options.use_confidence else np.ones(data.num_rays, dtype=bool)
    log = MetricsLog(1, options.log_every)
    logger.info(
        f"stage 1: {plan.stage1_iters} iterations, {plan.batch_rays} rays/batch, "
        f"{int(gate.sum())}/{data.num_rays} confident ultra-wide rays"
    )

    for it in range(plan.stage1_iters):
        index = rng.integers(0, data.num_rays, size=plan.batch_rays)
        rays = data.rays.subset(index)
        t = _sample_t(scene, len(index), rng)

        scene.main.store.zero_grad()
        main_color = volume_render_color(sample_field(scene.main, rays, t, scene.far)).color
        loss_main, _ = recon_loss(main_color, data.main_colors[index])
        backward(loss_main)
        adam_step(state_main, scene.main.store)

        scene.ultra.store.zero_grad()
        ultra_color = volume_render_color(sample_field(scene.ultra, rays, t, scene.far)).color
        loss_ultra, empty = recon_loss(ultra_color, data.ultra_colors[index], gate[index])
        if not empty:
            backward(loss_ultra)
            adam_step(state_ultra, scene.ultra.store)

        if log.due(it):
            log.record(it, loss_main=loss_main.data, loss_ultra=loss_ultra.data, lr=state_main.lr())
    return log


# --------------------------
# STAGE 2
# --------------------------

@dataclass
class PatchSource:
    """Full-view renders the stage-2 patches are cut from."""
    main: np.ndarray        # V x H x W x 3
    ultra: np.ndarray       # V x H x W x 3
    disparity: np.ndarray   # V x H x W, axial


def render_patch_source(scene: FusedScene, cameras: List[CameraModel], chunk: int = RENDER_CHUNK) -> PatchSource:
    """Frozen fields render identically every iteration, so the views are rendered once."""
    renders = [render_outputs(scene, cam, chunk) for cam in cameras]
    return PatchSource(
        np.stack([r.main for r in renders]),
        np.stack([r.ultra for r in renders]),
        np.stack([r.disparity_main for r in renders]),
    )


def fit_defocus(
    params: DefocusParams,
    source: PatchSource,
    iterations: int,
    patches: int,
    patch_size: int,
    rng: np.random.Generator,
    options: TrainOptions,
) -> MetricsLog:
    """Adam on (A, D_f) against the focus loss averaged over random patches."""
    v, h, w = source.disparity.shape
    if patch_size > min(h, w):
        raise ParameterError(f"patch size {patch_size} exceeds the {w}x{h} views")
    state = AdamState(options.defocus_lr, options.decay_steps)
    log = MetricsLog(2, options.log_every)
    for it in range(iterations):
        params.store.zero_grad()
        total = None
        for _ in range(patches):
            view = int(rng.integers(0, v))
            y0 = int(rng.integers(0, h - patch_size + 1))
            x0 = int(rng.integers(0, w - patch_size + 1))
            window = (view, slice(y0, y0 + patch_size), slice(x0, x0 + patch_size))
            loss = focus_loss(
                source.ultra[window], params, source.main[window], source.disparity[window],
                options.gamma, options.beta, options.r_min,
            )
            total = loss if total is None else total + loss
        total = total * (1.0 / patches)
        backward(total)
        adam_step(state, params.store)
        if log.due(it):
            log.record(it, loss_focus=total.data, A=params.A, D_f=params.D_f)
    return log


def train_stage2(scene: FusedScene, data: TrainingData, plan: StagePlan, options: TrainOptions) -> MetricsLog:
    scene.set_stage(plan, 2)
    if not options.use_focus_loss:
        logger.info(f"stage 2 skipped (focus loss disabled); keeping {scene.defocus}")
        return MetricsLog(2, options.log_every)
    rng = substream(plan.seed, "fusion.stage2")
    source = render_patch_source(scene, data.cameras, options.render_chunk)
    log = fit_defocus(scene.defocus, source, plan.stage2_iters, plan.stage2_patches, plan.patch_size, rng, options)
    logger.info(f"stage 2 recovered {scene.defocus}")
    return log


# --------------------------
# STAGE 3
# --------------------------

def stage3_targets(scene: FusedScene, data: TrainingData, options: TrainOptions) -> np.ndarray:
    """Per-ray blend targets; M_blend is normalized over each full training view."""
    targets = np.empty_like(data.main_colors)
    for position, cam in enumerate(data.cameras):
        disparity = render_outputs(scene, cam, options.render_chunk).disparity_main
        if options.blend_source == "disparity":
            weights_map = normalize_map(disparity)
        else:
            weights_map = defocus_map(scene.defocus, disparity).data
        part = data.view_slice(position)
        targets[part] = blend_target(
            data.main_colors[part], data.ultra_colors[part], weights_map.reshape(-1)
        )
    return targets


def train_stage3(scene: FusedScene, data: TrainingData, plan: StagePlan, options: TrainOptions) -> MetricsLog:
    scene.set_stage(plan, 3)
    targets = stage3_targets(scene, data, options)
    rng = substream(plan.seed, "fusion.stage3")
    state = AdamState(options.learning_rate, options.decay_steps)
    gate = data.confidence if options.use_confidence else np.ones(data.num_rays, dtype=bool)
    log = MetricsLog(3, options.log_every)
    for it in range(plan.stage3_iters):
        index = rng.integers(0, data.num_rays, size=plan.batch_rays)
        rays = data.rays.subset(index)
        t = _sample_t(scene, len(index), rng)
        scene.main.store.zero_grad()
        main = sample_field(scene.main, rays, t, scene.far, with_blend=True)
        ultra = sample_field(scene.ultra, rays, t, scene.far)
        fused = fused_volume_render(main, ultra)
        loss, empty = fusion_loss(fused.color, targets[index], gate[index])
        if not empty:
            backward(loss)
            adam_step(state, scene.main.store)
        if log.due(it):
            log.record(it, loss_fusion=loss.data, lr=state.lr())
    return log


# --------------------------
# ORCHESTRATION
# --------------------------

STAGES = {1: train_stage1, 2: train_stage2, 3: train_stage3}


def run_stage(
    stage: int,
    dataset_dir,
    bundle_dir,
    plan: StagePlan,
    config: FieldConfig,
    options: TrainOptions,
    settings_record: Optional[Dict[str, str]] = None,
) -> FusedScene:
    """
    Runs one stage and saves the bundle. Stage 1 starts a fresh scene; later
    stages load the bundle and require the previous stage to be completed.
    """
    if stage not in STAGES:
        raise ParameterError(f"unknown stage {stage}")
    dataset_dir, bundle_dir = Path(dataset_dir), Path(bundle_dir)
    dataset = load_manifest(dataset_dir)
    data = load_training_data(dataset_dir, dataset)

    if stage == 1:
        scene = scene_from_dataset(dataset, config, plan.seed, options)
        manifest = BundleManifest(
            dataset=str(dataset_dir),
            plan=plan,
            field_config=scene.field_record(),
            bounds=[scene.near, scene.far],
            center=[float(c) for c in scene.main.center],
            scale=scene.main.scale,
            seeds={"master": plan.seed, "dataset": dataset.seed},
        )
    else:
        scene, manifest = FusedScene.load(bundle_dir)
        if stage - 1 not in manifest.stages_completed:
            raise StageOrderError(
                f"stage {stage} needs stage {stage - 1} (bundle has {manifest.stages_completed or 'none'})"
            )
        manifest.plan = plan

    log = STAGES[stage](scene, data, plan, options)
    log.save(bundle_dir / f"metrics_stage{stage}.csv")
    manifest.stages_completed = sorted(set(s for s in manifest.stages_completed if s < stage) | {stage})
    if settings_record is not None:
        manifest.settings = settings_record
    scene.save(bundle_dir, manifest)
    return scene
