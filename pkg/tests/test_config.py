import os
from pathlib import Path

import pytest

from app.align.pipeline import AlignOptions
from app.config import Settings, dump_settings, load_settings, settings_dict
from app.models.data_models import StagePlan
from app.utils.error_handler import ConfigError


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in list(os.environ):
        if name.startswith("DUALCAM_"):
            monkeypatch.delenv(name)


def test_defaults():
    settings = load_settings()
    assert settings.BETA == 4.0 and settings.GAMMA == 2.0
    assert settings.A_INIT == 5.0 and settings.DF_INIT == 0.5
    assert settings.LEARNING_RATE == 5e-4 and settings.LR_DECAY_STEPS == 250000
    assert settings.GEN_DF is None
    assert settings.DATASET_DIR == Path("data") / "dataset"


def test_precedence(monkeypatch, tmp_path):
    monkeypatch.setenv("DUALCAM_SEED", "9")
    assert load_settings().SEED == 9

    config = tmp_path / "run.env"
    config.write_text("SEED=4\nviews=16\n")
    from_file = load_settings(config)
    assert from_file.SEED == 4 and from_file.VIEWS == 16
    assert load_settings(config, {"seed": "11"}).SEED == 11


def test_unknown_keys_are_rejected(tmp_path):
    config = tmp_path / "typo.env"
    config.write_text("SEED=1\nLEARNIG_RATE=0.1\n")
    with pytest.raises(ConfigError, match="LEARNIG_RATE"):
        load_settings(config)
    with pytest.raises(ConfigError):
        load_settings(overrides={"NOT_A_KEY": "1"})


def test_bad_values_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_settings(overrides={"SEED": "abc"})
    with pytest.raises(ConfigError):
        load_settings(overrides={"BLEND_SOURCE": "random"})
    with pytest.raises(ConfigError, match="not found"):
        load_settings(tmp_path / "missing.env")


def test_dump_and_reload_round_trip(tmp_path):
    settings = load_settings(overrides={"SEED": 5, "GEN_DF": 0.3, "USE_FLOW": "false", "OUTPUT_DIR": "out/x"})
    path = tmp_path / "effective.env"
    text = dump_settings(settings, path)
    assert "USE_FLOW=false\n" in text
    assert path.read_text() == text
    assert load_settings(path).model_dump() == settings.model_dump()

    defaults = load_settings()
    assert load_settings(path).model_dump() != defaults.model_dump()
    assert settings_dict(defaults)["GEN_DF"] == ""


def test_derived_option_objects():
    settings = load_settings(overrides={
        "STAGE1_ITERS": 10, "BATCH_RAYS": 32, "SEED": 3, "FIELD_WIDTH": 24, "CONFIDENCE_T": 0.5,
    })
    plan = settings.stage_plan()
    assert isinstance(plan, StagePlan)
    assert (plan.stage1_iters, plan.batch_rays, plan.seed) == (10, 32, 3)
    assert settings.field_config().width == 24
    options = settings.align_options()
    assert isinstance(options, AlignOptions)
    assert options.confidence_t == 0.5 and options.seed == 3


def test_settings_forbid_unknown_fields():
    with pytest.raises(Exception):
        Settings(NOT_A_KEY=1)
