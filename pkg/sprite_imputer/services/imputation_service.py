"""Generate missing poses of a character from whichever poses are available."""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from scipy.spatial.distance import cdist

from sprite_imputer.exceptions import ContractViolationError
from sprite_imputer.models.generator import Generator
from sprite_imputer.schemas.domain import ALL_DOMAINS, DomainId, other_domains
from sprite_imputer.schemas.imputation import ImputationRequest, Palette
from sprite_imputer.schemas.sprite import SPRITE_SHAPE, Sprite
from sprite_imputer.services.batch_service import (
    SourceSet,
    TargetLabel,
    build_forward_input,
    collate,
    from_model_range,
    to_model_range,
)

logger = logging.getLogger(__name__)

QUANTIZE_CHUNK = 1024


def build_request_input(request: ImputationRequest) -> Tuple[SourceSet, TargetLabel]:
    """
    Generator input for a request: absent poses become zero slots.

    The result is identical to a forward input built from a full sheet with the
    absent poses dropped.
    """
    slots = np.zeros((len(ALL_DOMAINS),) + SPRITE_SHAPE, dtype=np.uint8)
    for domain, sprite in request.available.items():
        slots[int(domain)] = sprite.pixels
    sheet = to_model_range(slots)
    dropped = set(other_domains(request.target)) - set(request.available)
    return build_forward_input(sheet, request.target, dropped)


def extract_palette(sprites: Sequence[Sprite]) -> Palette:
    """Distinct RGBA colors of the given sprites in order of first appearance."""
    if not sprites:
        message = "extract_palette needs at least one sprite"
        logger.error(message)
        raise ContractViolationError(message)
    pixels = np.concatenate([sprite.pixels.reshape(-1, 4) for sprite in sprites])
    _, first_index = np.unique(pixels, axis=0, return_index=True)
    ordered = pixels[np.sort(first_index)]
    return Palette(colors=tuple(tuple(int(channel) for channel in row) for row in ordered))


def quantize_to_palette(pixels: np.ndarray, palette: Palette) -> np.ndarray:
    """Snap every pixel to its nearest palette color in RGBA; ties go to the earlier color."""
    if pixels.ndim != 3 or pixels.shape[-1] != 4:
        message = f"quantize_to_palette expects (H, W, 4) pixels, got {pixels.shape}"
        logger.error(message)
        raise ContractViolationError(message)
    colors = palette.as_array()
    flat = pixels.reshape(-1, 4).astype(np.float64)
    indices = np.empty(flat.shape[0], dtype=np.int64)
    for start in range(0, flat.shape[0], QUANTIZE_CHUNK):
        distances = cdist(flat[start:start + QUANTIZE_CHUNK], colors.astype(np.float64), "sqeuclidean")
        indices[start:start + QUANTIZE_CHUNK] = distances.argmin(axis=1)
    return colors[indices].reshape(pixels.shape)


def impute_many(model: Generator, requests: Sequence[ImputationRequest], batch_size: int = 32) -> List[Sprite]:
    """Batched inference; results are in request order."""
    if not requests:
        return []
    for request in requests:
        if len(request.available) == 1:
            logger.warning(f"Imputing '{request.target.pose_name}' from a single source pose; "
                           f"expect noticeably lower quality")

    device = next(model.parameters()).device
    was_training = model.training
    model.eval()
    outputs: List[np.ndarray] = []
    try:
        with torch.no_grad():
            for start in range(0, len(requests), batch_size):
                chunk = requests[start:start + batch_size]
                sources, labels = collate([build_request_input(request) for request in chunk])
                generated = model(sources.to(device), labels.to(device))
                outputs.extend(from_model_range(generated))
    finally:
        model.train(was_training)

    results = []
    for request, pixels in zip(requests, outputs):
        if request.quantize:
            palette = extract_palette(list(request.available.values()))
            pixels = quantize_to_palette(pixels, palette)
        results.append(Sprite(pixels=pixels))
    return results


def impute(model: Generator, request: ImputationRequest) -> Sprite:
    return impute_many(model, [request])[0]


def impute_missing(model: Generator, available: Dict[DomainId, Sprite], targets: Optional[Sequence[DomainId]] = None,
                   quantize: bool = False) -> Dict[DomainId, Sprite]:
    """Every requested missing pose (default: all of them), each from the same available set."""
    if targets is None:
        targets = [domain for domain in ALL_DOMAINS if domain not in available]
    requests = [ImputationRequest(available=available, target=target, quantize=quantize) for target in targets]
    return {request.target: sprite for request, sprite in zip(requests, impute_many(model, requests))}
