"""
FusedScene: the trained artifact. Two radiance fields sharing one encoding
config (the main one carries the eta head), the scene's DefocusParams, global
bounds and the main cameras of the dataset.

Bundle directory:

    bundle.json      BundleManifest (plan, seeds, config, stages completed)
    main.ckpt        main field without the eta head
    blend.ckpt       eta head
    ultra.ckpt       ultra-wide field
    defocus.ckpt     A, D_f
    metrics_stage{1,2,3}.csv
"""

from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Dict, Iterator, List, Optional

import numpy as np

from app.bokeh.defocus import A_INIT, DF_INIT, DefocusParams
from app.diffcore.params import ParamStore, load_checkpoint
from app.models.data_models import BundleManifest, CameraRecord, load_bundle_manifest, save_manifest
from app.radiance.camera import CameraModel
from app.radiance.field import FieldConfig, RadianceField
from app.utils.error_handler import FormatError, StageOrderError
from app.utils.logging_utils import get_logger
from app.utils.random_utils import substream

logger = get_logger("fusion.scene")

MAIN = "main"
ULTRA = "ultra"
CHECKPOINTS = {"main": "main.ckpt", "blend": "blend.ckpt", "ultra": "ultra.ckpt", "defocus": "defocus.ckpt"}


class FusedScene:
    def __init__(
        self,
        main: RadianceField,
        ultra: RadianceField,
        defocus: DefocusParams,
        near: float,
        far: float,
        cameras: Optional[List[CameraModel]] = None,
        samples: int = 32,
        lindisp: bool = True,
    ):
        if main.config.l_pos != ultra.config.l_pos or main.config.l_dir != ultra.config.l_dir:
            raise FormatError("main and ultra-wide fields must share the positional-encoding config")
        if not main.config.blend_head:
            main.add_blend_head()
        self.main = main
        self.ultra = ultra
        self.defocus = defocus
        self.near = float(near)
        self.far = float(far)
        self.cameras = list(cameras or [])
        self.samples = int(samples)
        self.lindisp = lindisp

    @classmethod
    def create(
        cls,
        config: FieldConfig,
        seed: int,
        near: float,
        far: float,
        center=(0.0, 0.0, 0.0),
        scale: float = 1.0,
        A_init: float = A_INIT,
        Df_init: float = DF_INIT,
        cameras: Optional[List[CameraModel]] = None,
        samples: int = 32,
        lindisp: bool = True,
    ) -> "FusedScene":
        main = RadianceField.create(
            MAIN, replace(config, blend_head=True), substream(seed, "fusion.main_init"), center, scale
        )
        ultra = RadianceField.create(
            ULTRA, replace(config, blend_head=False), substream(seed, "fusion.ultra_init"), center, scale
        )
        return cls(main, ultra, DefocusParams.create(A_init, Df_init), near, far, cameras, samples, lindisp)

    # --- parameter access ---
    def stores(self) -> Dict[str, ParamStore]:
        return {"main": self.main.store, "ultra": self.ultra.store, "defocus": self.defocus.store}

    def block_names(self) -> List[str]:
        return [name for store in self.stores().values() for name in store]

    def snapshot(self) -> Dict[str, np.ndarray]:
        """Copies of every block, for freeze checks and rollbacks."""
        values = {}
        for store in self.stores().values():
            values.update(store.values())
        return values

    def set_stage(self, plan, stage: int) -> None:
        """Trainable flags for `stage` as the plan declares them."""
        for store in self.stores().values():
            for name in store:
                store.set_trainable([name], plan.is_trainable(stage, name))

    # --- bundle I/O ---
    def save(self, bundle_dir, manifest: BundleManifest) -> Path:
        bundle_dir = Path(bundle_dir)
        blend = self.main.blend_blocks()
        parts = {
            "main": self.main.store.subset([n for n in self.main.store if n not in blend]),
            "blend": self.main.store.subset(blend),
            "ultra": self.ultra.store,
            "defocus": self.defocus.store,
        }
        for key, store in parts.items():
            store.save(bundle_dir / CHECKPOINTS[key], meta={"part": key})
        manifest.files = dict(CHECKPOINTS)
        manifest.defocus = self.defocus.as_dict()
        manifest.bounds = [self.near, self.far]
        manifest.cameras = [CameraRecord(**cam.to_record()) for cam in self.cameras]
        save_manifest(manifest, bundle_dir / "bundle.json")
        logger.info(f"bundle saved to {bundle_dir} (stages {manifest.stages_completed})")
        return bundle_dir

    @classmethod
    def load(cls, bundle_dir):
        """(scene, manifest) from a bundle directory."""
        bundle_dir = Path(bundle_dir)
        if not (bundle_dir / "bundle.json").is_file():
            raise StageOrderError(f"no checkpoint bundle in {bundle_dir}; run stage 1 first")
        manifest = load_bundle_manifest(bundle_dir)
        stores = {key: load_checkpoint(bundle_dir / name)[0] for key, name in CHECKPOINTS.items()}
        stores["main"].merge(stores["blend"])
        cfg = manifest.field_config
        config = FieldConfig(cfg["depth"], cfg["width"], cfg["color_width"], cfg["l_pos"], cfg["l_dir"])
        main = RadianceField(MAIN, replace(config, blend_head=True), stores["main"], manifest.center, manifest.scale)
        ultra = RadianceField(ULTRA, config, stores["ultra"], manifest.center, manifest.scale)
        scene = cls(
            main, ultra, DefocusParams(stores["defocus"]), manifest.bounds[0], manifest.bounds[1],
            [CameraModel.from_record(rec) for rec in manifest.cameras],
            int(cfg["samples"]), bool(cfg["lindisp"]),
        )
        return scene, manifest

    def field_record(self) -> Dict[str, int]:
        c = self.main.config
        return {
            "depth": c.depth, "width": c.width, "color_width": c.color_width,
            "l_pos": c.l_pos, "l_dir": c.l_dir, "samples": self.samples, "lindisp": int(self.lindisp),
        }


@contextmanager
def no_grad(scene: FusedScene) -> Iterator[None]:
    """Evaluates without recording a tape; trainable flags are restored afterwards."""
    flags = {
        key: {name: store.is_trainable(name) for name in store}
        for key, store in scene.stores().items()
    }
    for store in scene.stores().values():
        store.freeze()
    try:
        yield
    finally:
        for key, store in scene.stores().items():
            for name, flag in flags[key].items():
                store.set_trainable([name], flag)
