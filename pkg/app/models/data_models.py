"""
Data Models - dualcam
Pydantic v2 contracts for everything written to or read from disk:
scene descriptions, dataset manifests and checkpoint bundles.
"""

import json
from pathlib import Path
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from app.utils.error_handler import DatasetError, FormatError

SCHEMA_VERSION = 1

# --------------------------
# SCENE MODELS
# --------------------------

class PlaneSpec(BaseModel):
    """Fronto-parallel textured plane at depth 1/disparity"""
    disparity: float = Field(..., gt=0.0, le=1.0, description="Inverse depth of the plane")
    center: List[float] = Field(
        default_factory=lambda: [0.0, 0.0],
        min_length=2,
        max_length=2,
        description="Lateral (x, y) center in world units"
    )
    half_extent: Optional[List[float]] = Field(
        default=None,
        min_length=2,
        max_length=2,
        description="Lateral half width/height; None for the infinite background"
    )
    texture: Literal["checker", "noise", "stripes"] = Field(..., description="Procedural texture kind")
    texture_seed: int = Field(..., ge=0, description="Seed of the texture's value noise")
    base_color: List[float] = Field(..., min_length=3, max_length=3, description="RGB tint in [0,1]")
    cell_size: float = Field(..., gt=0.0, description="Texture period in world units")

    @property
    def depth(self) -> float:
        return 1.0 / self.disparity

    @property
    def is_background(self) -> bool:
        return self.half_extent is None


class SceneSpec(BaseModel):
    """Planes ordered front to back; the last one is the infinite background"""
    seed: int = Field(..., ge=0)
    planes: List[PlaneSpec] = Field(..., min_length=2, max_length=5)

    @model_validator(mode="after")
    def _check_order(self):
        disparities = [p.disparity for p in self.planes]
        if any(b >= a for a, b in zip(disparities, disparities[1:])):
            raise ValueError(f"plane disparities must be strictly decreasing, got {disparities}")
        if not self.planes[-1].is_background:
            raise ValueError("the last plane must be the unbounded background")
        if any(p.is_background for p in self.planes[:-1]):
            raise ValueError("only the last plane may be unbounded")
        return self

    @property
    def foreground(self) -> PlaneSpec:
        return self.planes[0]

    @property
    def background(self) -> PlaneSpec:
        return self.planes[-1]

# --------------------------
# DATASET MODELS
# --------------------------

class CameraRecord(BaseModel):
    """Serialized CameraModel"""
    fx: float = Field(..., gt=0.0)
    fy: float = Field(..., gt=0.0)
    cx: float
    cy: float
    width: int = Field(..., gt=0)
    height: int = Field(..., gt=0)
    rotation: List[List[float]] = Field(..., description="World-from-camera rotation, 3x3")
    translation: List[float] = Field(..., min_length=3, max_length=3)
    near: float = Field(..., gt=0.0)
    far: float = Field(..., gt=0.0)

    @field_validator("rotation")
    @classmethod
    def _check_rotation(cls, value):
        if len(value) != 3 or any(len(row) != 3 for row in value):
            raise ValueError("rotation must be 3x3")
        return value


VIEW_FILES = ("main", "main_fg", "main_bg", "ultra", "gt", "gt_aif", "disparity", "layers")


class ViewRecord(BaseModel):
    """One capture position: both cameras and the files written for it"""
    index: int = Field(..., ge=0)
    split: Literal["train", "test"]
    main_camera: CameraRecord
    ultra_camera: CameraRecord
    files: Dict[str, str] = Field(..., description="Paths relative to the manifest")

    @field_validator("files")
    @classmethod
    def _check_files(cls, value):
        missing = [key for key in VIEW_FILES if key not in value]
        if missing:
            raise ValueError(f"view is missing file entries: {missing}")
        return value


class GeneratorTruth(BaseModel):
    """Parameters the generator used; recovery tests read them from here"""
    A_main: float = Field(..., ge=0.0, description="Blur intensity of the main camera")
    D_f: float = Field(..., description="Focal disparity of main.png")
    D_f_fg: float = Field(..., description="Focal disparity of main_fg.png")
    D_f_bg: float = Field(..., description="Focal disparity of main_bg.png")
    color_curve: Dict[str, List[float]] = Field(..., description="Per-channel cubic coefficients (a, b, c)")
    ultra_blur_radius: float = Field(..., ge=0.0)
    ultra_offset: List[float] = Field(..., min_length=3, max_length=3, description="Camera-frame offset")
    ultra_fov_ratio: float = Field(..., gt=0.0)


class DatasetManifest(BaseModel):
    """manifest.json of a generated dataset"""
    schema_version: int = Field(default=SCHEMA_VERSION)
    scene_id: str
    seed: int = Field(..., ge=0)
    width: int = Field(..., gt=0)
    height: int = Field(..., gt=0)
    views: List[ViewRecord] = Field(..., min_length=1)
    train: List[int]
    test: List[int]
    truth: GeneratorTruth
    scene: SceneSpec

    @model_validator(mode="after")
    def _check_split(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {self.schema_version}")
        indices = sorted(v.index for v in self.views)
        if indices != list(range(len(self.views))):
            raise ValueError("view indices must be 0..N-1")
        if sorted(self.train + self.test) != indices or set(self.train) & set(self.test):
            raise ValueError("train/test split must partition the views")
        for view in self.views:
            expected = "train" if view.index in self.train else "test"
            if view.split != expected:
                raise ValueError(f"view {view.index} is marked {view.split} but listed as {expected}")
        return self

    def view(self, index: int) -> ViewRecord:
        for view in self.views:
            if view.index == index:
                return view
        raise DatasetError(f"unknown view id {index} (dataset has {len(self.views)} views)")

# --------------------------
# TRAINING MODELS
# --------------------------

FIELD_PREFIXES = ("main.", "ultra.")
DEFOCUS_PREFIX = "defocus."
BLEND_PREFIX = "main.blend."


class StagePlan(BaseModel):
    """Iteration counts and batch layout of the three training stages"""
    stage1_iters: int = Field(default=20000, gt=0)
    stage2_iters: int = Field(default=2000, gt=0)
    stage3_iters: int = Field(default=5000, gt=0)
    batch_rays: int = Field(default=1024, gt=0)
    stage2_patches: int = Field(default=4, gt=0)
    patch_size: int = Field(default=16, gt=0)
    seed: int = Field(default=0, ge=0)

    def frozen_prefixes(self, stage: int) -> List[str]:
        """Block-name prefixes that stay fixed during `stage`."""
        if stage == 1:
            return [DEFOCUS_PREFIX]
        if stage == 2:
            return list(FIELD_PREFIXES)
        if stage == 3:
            return list(FIELD_PREFIXES) + [DEFOCUS_PREFIX]
        raise ValueError(f"unknown stage {stage}")

    def is_trainable(self, stage: int, block: str) -> bool:
        """The eta head is trained in stage 3 only, and nothing else is."""
        if block.startswith(BLEND_PREFIX):
            return stage == 3
        return not any(block.startswith(p) for p in self.frozen_prefixes(stage))

    def iterations(self, stage: int) -> int:
        return {1: self.stage1_iters, 2: self.stage2_iters, 3: self.stage3_iters}[stage]


class BundleManifest(BaseModel):
    """bundle.json of a checkpoint bundle directory"""
    schema_version: int = Field(default=SCHEMA_VERSION)
    dataset: str = Field(..., description="Dataset directory the bundle was trained on")
    stages_completed: List[int] = Field(default_factory=list)
    plan: StagePlan
    field_config: Dict[str, int] = Field(..., description="FieldConfig shared by both fields")
    bounds: List[float] = Field(..., min_length=2, max_length=2, description="Global near/far")
    center: List[float] = Field(..., min_length=3, max_length=3)
    scale: float = Field(..., gt=0.0)
    defocus: Dict[str, float] = Field(default_factory=dict)
    seeds: Dict[str, int] = Field(default_factory=dict)
    settings: Dict[str, str] = Field(default_factory=dict, description="Effective config, key=value")
    files: Dict[str, str] = Field(default_factory=dict)
    cameras: List[CameraRecord] = Field(default_factory=list, description="Main cameras of the dataset views")

# --------------------------
# LOADERS
# --------------------------

def _read_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise DatasetError(f"manifest not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from exc


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    """
    Reads and validates a dataset manifest; `path` may be the JSON file or
    the dataset directory.
    """
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        manifest = DatasetManifest.model_validate(_read_json(path))
    except ValidationError as exc:
        raise DatasetError(f"invalid manifest {path}: {exc}") from exc
    if check_files:
        missing = [
            rel for view in manifest.views for rel in view.files.values()
            if not (path.parent / rel).is_file()
        ]
        if missing:
            raise DatasetError(f"manifest references missing files: {missing[:5]}")
    return manifest


def save_manifest(manifest: BaseModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True))
    return path


def load_bundle_manifest(path) -> BundleManifest:
    path = Path(path)
    if path.is_dir():
        path = path / "bundle.json"
    try:
        return BundleManifest.model_validate(_read_json(path))
    except ValidationError as exc:
        raise FormatError(f"invalid bundle manifest {path}: {exc}") from exc
