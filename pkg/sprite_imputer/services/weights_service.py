"""
Versioned binary container for network weights.

Layout (little endian), documented in docs/weight_container.md:

    magic        8 bytes   b"SPRIMPW1"
    version      u16
    kind         u8        1 = generator, 2 = discriminator
    reserved     u8        0
    config_len   u32
    config       config_len bytes, UTF-8 JSON of the network config
    payload_len  u64
    payload      payload_len bytes, torch.save(state_dict)
    digest       32 bytes  SHA-256 of payload
"""
import hashlib
import io
import logging
import os
import struct
from pathlib import Path
from typing import Optional, Union

import torch
from pydantic import ValidationError
from torch import nn

from sprite_imputer.exceptions import WeightContainerError
from sprite_imputer.models.discriminator import Discriminator
from sprite_imputer.models.generator import Generator
from sprite_imputer.schemas.networks import DiscriminatorConfig, GeneratorConfig

logger = logging.getLogger(__name__)

MAGIC = b"SPRIMPW1"
FORMAT_VERSION = 1
KIND_GENERATOR = 1
KIND_DISCRIMINATOR = 2

_HEADER = struct.Struct("<8sHBBI")
_PAYLOAD_LEN = struct.Struct("<Q")
_DIGEST_SIZE = 32

Network = Union[Generator, Discriminator]
PathLike = Union[str, Path]


def _fail(message: str) -> None:
    logger.error(message)
    raise WeightContainerError(message)


def is_weight_container(path: PathLike) -> bool:
    try:
        with open(path, "rb") as f:
            return f.read(len(MAGIC)) == MAGIC
    except OSError:
        return False


def encode_weights(model: Network) -> bytes:
    if isinstance(model, Generator):
        kind = KIND_GENERATOR
    elif isinstance(model, Discriminator):
        kind = KIND_DISCRIMINATOR
    else:
        raise TypeError(f"Unsupported model type: {type(model).__name__}")

    config_bytes = model.config.model_dump_json().encode("utf-8")
    buffer = io.BytesIO()
    torch.save({k: v.detach().cpu() for k, v in model.state_dict().items()}, buffer)
    payload = buffer.getvalue()

    return b"".join([
        _HEADER.pack(MAGIC, FORMAT_VERSION, kind, 0, len(config_bytes)),
        config_bytes,
        _PAYLOAD_LEN.pack(len(payload)),
        payload,
        hashlib.sha256(payload).digest(),
    ])


def save_weights(model: Network, path: PathLike) -> Path:
    """Write the container atomically (temp file + rename)."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    temp_path = target.with_name(target.name + ".tmp")
    with open(temp_path, "wb") as f:
        f.write(encode_weights(model))
    os.replace(temp_path, target)
    logger.debug(f"Saved {type(model).__name__} weights to {target}")
    return target


def _check_compatible(model: nn.Module, state_dict: dict) -> None:
    """Fail on the first layer whose name or shape differs from the target model."""
    loaded_keys = list(state_dict.keys())
    for name, tensor in model.state_dict().items():
        if name not in state_dict:
            _fail(f"Weight container does not match model config: layer '{name}' is missing")
        if tuple(state_dict[name].shape) != tuple(tensor.shape):
            _fail(
                f"Weight container does not match model config: layer '{name}' has shape "
                f"{tuple(state_dict[name].shape)}, model expects {tuple(tensor.shape)}"
            )
    expected = set(model.state_dict().keys())
    for name in loaded_keys:
        if name not in expected:
            _fail(f"Weight container does not match model config: unexpected layer '{name}'")


def decode_weights(data: bytes, into: Optional[Network] = None, source: str = "<bytes>") -> Network:
    """
    Rebuild a network from container bytes.

    Args:
        data: full container contents
        into: optional existing network to load into; its layers must match
        source: name used in error messages

    Returns:
        The loaded network (``into`` itself when given)
    """
    if len(data) < _HEADER.size:
        _fail(f"Weight container {source} is truncated (header incomplete)")
    magic, version, kind, _reserved, config_len = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        _fail(f"{source} is not a weight container (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        _fail(f"Weight container {source} has format version {version}, expected {FORMAT_VERSION}")
    if kind not in (KIND_GENERATOR, KIND_DISCRIMINATOR):
        _fail(f"Weight container {source} has unknown kind {kind}")

    offset = _HEADER.size
    if len(data) < offset + config_len + _PAYLOAD_LEN.size:
        _fail(f"Weight container {source} is truncated (config section incomplete)")
    config_json = data[offset:offset + config_len]
    offset += config_len
    (payload_len,) = _PAYLOAD_LEN.unpack_from(data, offset)
    offset += _PAYLOAD_LEN.size
    if len(data) != offset + payload_len + _DIGEST_SIZE:
        _fail(f"Weight container {source} is truncated or has trailing bytes "
              f"(expected {offset + payload_len + _DIGEST_SIZE} bytes, found {len(data)})")
    payload = data[offset:offset + payload_len]
    digest = data[offset + payload_len:]
    if hashlib.sha256(payload).digest() != digest:
        _fail(f"Weight container {source} is corrupt (checksum mismatch)")

    try:
        if kind == KIND_GENERATOR:
            config = GeneratorConfig.model_validate_json(config_json)
        else:
            config = DiscriminatorConfig.model_validate_json(config_json)
    except ValidationError as e:
        _fail(f"Weight container {source} has an invalid config block: {e}")

    state_dict = torch.load(io.BytesIO(payload), map_location="cpu", weights_only=True)

    if into is None:
        into = Generator(config) if kind == KIND_GENERATOR else Discriminator(config)
    else:
        expected_kind = KIND_GENERATOR if isinstance(into, Generator) else KIND_DISCRIMINATOR
        if expected_kind != kind:
            _fail(f"Weight container {source} holds a different network kind ({kind})")
    _check_compatible(into, state_dict)
    into.load_state_dict(state_dict, strict=True)
    return into


def load_weights(path: PathLike, into: Optional[Network] = None) -> Network:
    source = Path(path)
    try:
        data = source.read_bytes()
    except OSError as e:
        message = f"Cannot read weight container {source}: {e}"
        logger.error(message)
        raise WeightContainerError(message) from e
    return decode_weights(data, into=into, source=str(source))
