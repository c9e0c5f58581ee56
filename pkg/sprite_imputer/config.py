"""
Environment and run-configuration loading.

Environment variables come from the process or a local .env file. Run
configurations are YAML files with nested ``run``/``data``/``train`` sections;
command-line flags override file values through dotted keys.
"""
import copy
import logging
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from sprite_imputer.exceptions import ConfigError
from sprite_imputer.schemas.training import ABLATION_LADDER, RunConfig

logger = logging.getLogger(__name__)

load_dotenv()

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
LOG_DIR = os.getenv("LOG_DIR", "./logs")
ENABLE_DEBUG_LOGGING = os.getenv("ENABLE_DEBUG_LOGGING", "false").lower() == "true"

# Default pretrained-model file for the inception-v3 feature extractor
EXTRACTOR_WEIGHTS = os.getenv("SPRITE_IMPUTER_EXTRACTOR_WEIGHTS")
DEFAULT_DEVICE = os.getenv("SPRITE_IMPUTER_DEVICE", "cpu")


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a YAML run configuration into a plain dictionary."""
    config_path = Path(path)
    if not config_path.is_file():
        message = f"Config file not found: {config_path}"
        logger.error(message)
        raise ConfigError(message)

    try:
        with open(config_path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        message = f"Config file {config_path} is not valid YAML: {e}"
        logger.error(message)
        raise ConfigError(message) from e

    if not isinstance(raw, dict):
        message = f"Config file {config_path} must contain a mapping at top level"
        logger.error(message)
        raise ConfigError(message)
    return raw


def apply_overrides(raw: Mapping[str, Any], overrides: Optional[Mapping[str, Any]]) -> Dict[str, Any]:
    """
    Apply dotted-key overrides (``train.total_steps``) on top of a raw config.

    Overrides whose value is None are skipped so unset CLI flags keep the file value.
    """
    merged = copy.deepcopy(dict(raw))
    for dotted_key, value in (overrides or {}).items():
        if value is None:
            continue
        section = merged
        *parents, leaf = dotted_key.split(".")
        for part in parents:
            child = section.get(part)
            if not isinstance(child, dict):
                child = {}
                section[part] = child
            section = child
        section[leaf] = value
    return merged


def _merge_preset(train_raw: Dict[str, Any]) -> Dict[str, Any]:
    preset = train_raw.get("preset")
    if preset is None:
        return train_raw
    if preset not in ABLATION_LADDER:
        message = f"train.preset: unknown preset '{preset}'. Available: {sorted(ABLATION_LADDER)}"
        logger.error(message)
        raise ConfigError(message)
    merged = copy.deepcopy(ABLATION_LADDER[preset])
    merged.update(train_raw)
    return merged


def format_validation_error(error: ValidationError) -> str:
    """One line per failing field, each starting with its dotted path."""
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return "; ".join(lines)


def build_run_config(raw: Mapping[str, Any]) -> RunConfig:
    """Validate a raw mapping into a RunConfig, raising ConfigError on failure."""
    data = copy.deepcopy(dict(raw))
    if isinstance(data.get("train"), dict):
        data["train"] = _merge_preset(data["train"])
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        message = f"Invalid configuration: {format_validation_error(e)}"
        logger.error(message)
        raise ConfigError(message) from e


def load_run_config(path: Optional[Union[str, Path]] = None,
                    overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Load a YAML run configuration (optional) and apply CLI overrides."""
    raw = read_config_file(path) if path is not None else {}
    config = build_run_config(apply_overrides(raw, overrides))
    logger.debug(f"Resolved run config: {config.model_dump(mode='json')}")
    return config


def dump_run_config(config: RunConfig, path: Union[str, Path]) -> Path:
    """Write a config snapshot that load_run_config reads back field-for-field."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8") as f:
        yaml.safe_dump(config.model_dump(mode="json"), f, sort_keys=False)
    return target
