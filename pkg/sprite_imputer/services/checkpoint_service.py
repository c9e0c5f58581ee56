"""Training checkpoints: both networks, optimizer and scheduler states, step and RNG states."""
import io
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import torch

from sprite_imputer.exceptions import WeightContainerError
from sprite_imputer.models.discriminator import Discriminator
from sprite_imputer.models.generator import Generator
from sprite_imputer.services.weights_service import decode_weights, encode_weights, is_weight_container

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
PathLike = Union[str, Path]


@dataclass
class Checkpoint:
    step: int
    generator: Generator
    discriminator: Discriminator
    g_optimizer: Dict[str, Any]
    d_optimizer: Dict[str, Any]
    g_scheduler: Dict[str, Any]
    d_scheduler: Dict[str, Any]
    numpy_rng: Dict[str, Any]
    torch_rng: torch.Tensor
    best_l1: Optional[float] = None
    best_step: Optional[int] = None
    evaluations: List[Dict[str, Any]] = field(default_factory=list)


def save_checkpoint(checkpoint: Checkpoint, path: PathLike) -> Path:
    """Write a checkpoint atomically. Network weights are embedded as weight containers."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    state = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "step": checkpoint.step,
        "generator": encode_weights(checkpoint.generator),
        "discriminator": encode_weights(checkpoint.discriminator),
        "g_optimizer": checkpoint.g_optimizer,
        "d_optimizer": checkpoint.d_optimizer,
        "g_scheduler": checkpoint.g_scheduler,
        "d_scheduler": checkpoint.d_scheduler,
        "numpy_rng": checkpoint.numpy_rng,
        "torch_rng": checkpoint.torch_rng,
        "best_l1": checkpoint.best_l1,
        "best_step": checkpoint.best_step,
        "evaluations": checkpoint.evaluations,
    }
    temp_path = target.with_name(target.name + ".tmp")
    torch.save(state, temp_path)
    os.replace(temp_path, target)
    logger.info(f"Checkpoint for step {checkpoint.step} written to {target}")
    return target


def _read_state(path: PathLike) -> Dict[str, Any]:
    source = Path(path)
    try:
        data = source.read_bytes()
    except OSError as e:
        message = f"Cannot read checkpoint {source}: {e}"
        logger.error(message)
        raise WeightContainerError(message) from e
    try:
        # own checkpoint files: optimizer and RNG states are plain python containers
        state = torch.load(io.BytesIO(data), map_location="cpu", weights_only=False)
    except Exception as e:
        message = f"Checkpoint {source} is corrupt or truncated: {e}"
        logger.error(message)
        raise WeightContainerError(message) from e
    if not isinstance(state, dict) or state.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        version = state.get("format_version") if isinstance(state, dict) else None
        message = f"Checkpoint {source} has format version {version}, expected {CHECKPOINT_FORMAT_VERSION}"
        logger.error(message)
        raise WeightContainerError(message)
    return state


def load_checkpoint(path: PathLike) -> Checkpoint:
    state = _read_state(path)
    source = str(path)
    return Checkpoint(
        step=state["step"],
        generator=decode_weights(state["generator"], source=f"{source}#generator"),
        discriminator=decode_weights(state["discriminator"], source=f"{source}#discriminator"),
        g_optimizer=state["g_optimizer"],
        d_optimizer=state["d_optimizer"],
        g_scheduler=state["g_scheduler"],
        d_scheduler=state["d_scheduler"],
        numpy_rng=state["numpy_rng"],
        torch_rng=state["torch_rng"],
        best_l1=state.get("best_l1"),
        best_step=state.get("best_step"),
        evaluations=state.get("evaluations", []),
    )


def load_generator(path: PathLike) -> Generator:
    """Load a generator from either a weight container or a training checkpoint."""
    if is_weight_container(path):
        model = decode_weights(Path(path).read_bytes(), source=str(path))
    else:
        state = _read_state(path)
        model = decode_weights(state["generator"], source=f"{path}#generator")
    if not isinstance(model, Generator):
        message = f"{path} does not contain a generator"
        logger.error(message)
        raise WeightContainerError(message)
    model.eval()
    return model
