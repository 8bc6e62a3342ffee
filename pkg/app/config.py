# app/config.py

from pathlib import Path
from typing import Dict, Literal, Optional

from dotenv import dotenv_values
from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.utils.error_handler import ConfigError


class Settings(BaseSettings):
    """Every tunable of the pipeline. Defaults are the desk-scale run."""

    model_config = SettingsConfigDict(env_prefix="DUALCAM_", extra="forbid", validate_default=True)

    # Paths
    DATA_PATH: Path = Path("data")
    DATASET_DIR: Path = DATA_PATH / "dataset"
    BUNDLE_DIR: Path = DATA_PATH / "bundle"
    OUTPUT_DIR: Path = DATA_PATH / "renders"

    # Master seed; every module draws from a named sub-stream of it
    SEED: int = 0

    # Dataset
    WIDTH: int = 96
    HEIGHT: int = 72
    VIEWS: int = 24
    GEN_A: float = 4.0
    GEN_DF: Optional[float] = None
    ULTRA_BLUR: float = 0.75
    ULTRA_FOV_RATIO: float = 1.35
    ULTRA_OFFSET: float = 0.02

    # Radiance fields
    FIELD_DEPTH: int = 4
    FIELD_WIDTH: int = 64
    COLOR_WIDTH: int = 32
    L_POS: int = 10
    L_DIR: int = 4
    SAMPLES_PER_RAY: int = 32
    SAMPLE_LINDISP: bool = True
    RENDER_CHUNK: int = 4096

    # Training stages
    STAGE1_ITERS: int = 20000
    STAGE2_ITERS: int = 2000
    STAGE3_ITERS: int = 5000
    BATCH_RAYS: int = 1024
    STAGE2_PATCHES: int = 4
    PATCH_SIZE: int = 16
    LEARNING_RATE: float = 5e-4
    LR_DECAY_STEPS: int = 250000
    DEFOCUS_LR: float = 1e-2
    LOG_EVERY: int = 100

    # Bokeh / defocus
    BETA: float = 4.0
    GAMMA: float = 2.0
    R_MIN: float = 0.5
    A_INIT: float = 5.0
    DF_INIT: float = 0.5

    # Alignment
    RANSAC_ITERS: int = 2000
    INLIER_TOL_PX: float = 3.0
    MATCH_RATIO: float = 0.8
    FLOW_LEVELS: int = 4
    FLOW_ITERS: int = 10
    FLOW_WINDOW: int = 5
    FLOW_DAMPING: float = 1e-3
    CONFIDENCE_T: float = 1.0

    # Ablations
    USE_HOMOGRAPHY: bool = True
    USE_FLOW: bool = True
    USE_HISTOGRAM_MATCH: bool = True
    USE_CONFIDENCE: bool = True
    USE_FOCUS_LOSS: bool = True
    BLEND_SOURCE: Literal["learned", "disparity"] = "learned"

    def stage_plan(self):
        from app.models.data_models import StagePlan

        return StagePlan(
            stage1_iters=self.STAGE1_ITERS,
            stage2_iters=self.STAGE2_ITERS,
            stage3_iters=self.STAGE3_ITERS,
            batch_rays=self.BATCH_RAYS,
            stage2_patches=self.STAGE2_PATCHES,
            patch_size=self.PATCH_SIZE,
            seed=self.SEED,
        )

    def field_config(self):
        from app.radiance.field import FieldConfig

        return FieldConfig(self.FIELD_DEPTH, self.FIELD_WIDTH, self.COLOR_WIDTH, self.L_POS, self.L_DIR)

    def align_options(self):
        from app.align.pipeline import AlignOptions

        return AlignOptions(
            ransac_iters=self.RANSAC_ITERS,
            inlier_tol_px=self.INLIER_TOL_PX,
            seed=self.SEED,
            match_ratio=self.MATCH_RATIO,
            flow_levels=self.FLOW_LEVELS,
            flow_iters=self.FLOW_ITERS,
            flow_window=self.FLOW_WINDOW,
            flow_damping=self.FLOW_DAMPING,
            confidence_t=self.CONFIDENCE_T,
            use_homography=self.USE_HOMOGRAPHY,
            use_flow=self.USE_FLOW,
            use_histogram_match=self.USE_HISTOGRAM_MATCH,
        )


def _normalize_keys(values: Dict[str, object], source: str) -> Dict[str, object]:
    known = set(Settings.model_fields)
    out, unknown = {}, []
    for key, value in values.items():
        name = key.strip().upper()
        if name not in known:
            unknown.append(key)
            continue
        # `KEY=` in a config file means "unset"
        if value is None or value == "":
            continue
        out[name] = value
    if unknown:
        raise ConfigError(f"unknown config keys in {source}: {', '.join(sorted(unknown))}")
    return out


def load_settings(config_file=None, overrides: Optional[Dict[str, object]] = None) -> Settings:
    """
    Effective settings: defaults < DUALCAM_* environment < key=value config
    file < explicit overrides (CLI flags). Keys are case-insensitive.
    """
    values: Dict[str, object] = {}
    if config_file is not None:
        path = Path(config_file)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(_normalize_keys(dotenv_values(path), str(path)))
    if overrides:
        values.update(_normalize_keys(overrides, "overrides"))
    try:
        return Settings(**values)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def settings_dict(settings: Settings) -> Dict[str, str]:
    return {name: _format_value(getattr(settings, name)) for name in sorted(Settings.model_fields)}


def dump_settings(settings: Settings, path=None) -> str:
    """key=value text that load_settings reads back into an equal Settings."""
    text = "".join(f"{key}={value}\n" for key, value in settings_dict(settings).items())
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text

