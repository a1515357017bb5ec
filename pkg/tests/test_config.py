from pathlib import Path

import pytest

from config import ExperimentConfig, Settings
from milmodels import TrainConfig
from utils.errors import ConfigError
from wsipipe import PipelineConfig


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.lr0 == 5e-4 and cfg.lr_min == 1e-5 and cfg.epochs == 30
    assert cfg.positive_instance_rate == 0.5
    assert cfg.k_folds == 5 and cfg.runs == 5
    assert cfg.tile_size == 512 and cfg.magnification == "5x"
    assert cfg.worker_count >= 1


def test_file_then_overrides(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("# small run\nEPOCHS=7\nclassifier_hidden=16, 8\narchitecture=hybrid\n", encoding="utf-8")
    cfg = ExperimentConfig.load(path, epochs=3, seed=None)
    assert cfg.epochs == 3
    assert cfg.classifier_hidden == (16, 8)
    assert cfg.architecture == "hybrid"
    assert cfg.seed == 0


@pytest.mark.parametrize("overrides", [
    {"architecture": "cnn"},
    {"magnification": "40x"},
    {"bag_size_min": 10, "bag_size_max": 5},
    {"classifier_hidden": "4,x"},
    {"k_folds": 1},
    {"unknown": 1},
])
def test_invalid_values_raise_config_error(overrides):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(**overrides)


def test_missing_files(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "none.env")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(manifest=tmp_path / "none.csv")


def test_sub_configs_follow_the_experiment():
    cfg = ExperimentConfig.load(architecture="admil", epochs=4, workers=3, tile_size=64)
    train = TrainConfig.from_experiment(cfg)
    assert (train.architecture, train.epochs, train.workers) == ("admil", 4, 3)
    pipe = PipelineConfig.from_experiment(cfg)
    assert (pipe.tile_size, pipe.workers) == (64, 3)


def test_worker_count_falls_back_to_settings(monkeypatch):
    monkeypatch.setenv("MIL_WORKERS", "6")
    assert Settings().WORKERS == 6
    assert isinstance(Settings().DATA_DIR, Path)
