import shutil

import numpy as np
import pytest

from app.align import align_dataset
from app.fusion.trainer import TrainOptions, run_stage
from app.models.data_models import StagePlan
from app.radiance.field import FieldConfig
from app.scenegen import GeneratorOptions, build_scene, emit_dataset

# Small enough that a whole dataset is generated in seconds
TINY_OPTIONS = GeneratorOptions(views=8, width=48, height=36, workers=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_options():
    return TINY_OPTIONS


@pytest.fixture(scope="session")
def tiny_scene():
    return build_scene(7, n_planes=2)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory, tiny_scene):
    """8-view 48x36 dataset shared by the read-only tests; do not modify it."""
    out = tmp_path_factory.mktemp("dataset")
    manifest = emit_dataset(tiny_scene, out, 7, TINY_OPTIONS)
    return out, manifest


@pytest.fixture(scope="session")
def aligned_dataset(tmp_path_factory, tiny_dataset):
    """Copy of the tiny dataset with alignment artifacts for every training view."""
    source, manifest = tiny_dataset
    out = tmp_path_factory.mktemp("aligned") / "dataset"
    shutil.copytree(source, out)
    align_dataset(out)
    return out, manifest


@pytest.fixture(scope="session")
def tiny_training():
    """(plan, field config, options) of a training run that finishes in seconds."""
    plan = StagePlan(stage1_iters=4, stage2_iters=2, stage3_iters=3, batch_rays=64,
                     stage2_patches=1, patch_size=16, seed=0)
    config = FieldConfig(depth=2, width=16, color_width=8, l_pos=2, l_dir=1)
    return plan, config, TrainOptions(samples=8, log_every=1)


@pytest.fixture(scope="session")
def trained_bundle(tmp_path_factory, aligned_dataset, tiny_training):
    """Bundle that went through all three stages; tests must not write into it."""
    dataset_dir, _ = aligned_dataset
    bundle = tmp_path_factory.mktemp("bundle")
    plan, config, options = tiny_training
    for stage in (1, 2, 3):
        run_stage(stage, dataset_dir, bundle, plan, config, options)
    return bundle
