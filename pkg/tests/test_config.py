from pathlib import Path

import pytest
import yaml

from sprite_imputer.config import apply_overrides, build_run_config, dump_run_config, load_run_config
from sprite_imputer.exceptions import ConfigError
from sprite_imputer.schemas.training import DropoutKind, ReplacementKind

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_yaml(path: Path, data: dict) -> Path:
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


class TestRunConfig:
    def test_defaults_reproduce_full_protocol(self):
        config = build_run_config({"data": {"root": "data"}})
        train = config.train
        assert train.total_steps == 240_000
        assert train.batch_size == 4
        assert train.lr_initial == 1e-4
        assert (train.adam_beta1, train.adam_beta2) == (0.5, 0.999)
        weights = train.loss_weights
        assert (weights.lambda_reg, weights.lambda_dmn, weights.lambda_ssim, weights.lambda_mcyc) == (100, 10, 10, 10)
        assert train.dropout_strategy.kind == DropoutKind.CONSERVATIVE
        assert train.replacement_strategy.kind == ReplacementKind.FORWARD_ONLY

    @pytest.mark.parametrize("name", ["toy.yaml", "desk.yaml", "full.yaml"])
    def test_shipped_configs_load(self, name):
        config = load_run_config(CONFIGS / name)
        assert config.train.total_steps > 0

    def test_overrides_win_over_file(self, tmp_path):
        path = write_yaml(tmp_path / "run.yaml", {"data": {"root": "data"}, "train": {"total_steps": 10}})
        config = load_run_config(path, {"train.total_steps": 20, "train.batch_size": None,
                                        "train.dropout_strategy.kind": "original"})
        assert config.train.total_steps == 20
        assert config.train.batch_size == 4
        assert config.train.dropout_strategy.kind == DropoutKind.ORIGINAL

    def test_override_replaces_bare_string_section(self):
        merged = apply_overrides({"train": {"dropout_strategy": "curriculum"}}, {"train.dropout_strategy.kind": "none"})
        assert merged["train"]["dropout_strategy"] == {"kind": "none"}

    def test_bare_kind_names(self):
        config = build_run_config({"data": {"root": "d"},
                                   "train": {"dropout_strategy": "curriculum", "replacement_strategy": "original"}})
        assert config.train.dropout_strategy.kind == DropoutKind.CURRICULUM
        assert config.train.replacement_strategy.kind == ReplacementKind.ORIGINAL

    def test_preset_with_explicit_override(self):
        config = build_run_config({"data": {"root": "d"},
                                   "train": {"preset": "baseline", "width_multiplier": 0.5}})
        assert config.train.width_multiplier == 0.5
        assert config.train.dropout_strategy.kind == DropoutKind.ORIGINAL
        assert config.train.replacement_strategy.kind == ReplacementKind.ORIGINAL

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="train.preset"):
            build_run_config({"data": {"root": "d"}, "train": {"preset": "bigger"}})

    def test_unknown_key_names_its_path(self):
        with pytest.raises(ConfigError, match="train.learning_rate"):
            build_run_config({"data": {"root": "d"}, "train": {"learning_rate": 1.0}})

    def test_invalid_value_names_its_path(self):
        with pytest.raises(ConfigError, match="train.dropout_strategy.probabilities"):
            build_run_config({"data": {"root": "d"},
                              "train": {"dropout_strategy": {"kind": "original", "probabilities": [0.5, 0.5, 0.5]}}})

    def test_missing_data_section(self):
        with pytest.raises(ConfigError, match="data"):
            build_run_config({})

    def test_dump_round_trips(self, tmp_path):
        config = build_run_config({"run_name": "x", "data": {"root": "d"},
                                   "train": {"preset": "capacity", "total_steps": 7}})
        reloaded = load_run_config(dump_run_config(config, tmp_path / "config.yaml"))
        assert reloaded.model_dump() == config.model_dump()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(tmp_path / "absent.yaml")

    def test_non_mapping_file(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="mapping"):
            load_run_config(path)
