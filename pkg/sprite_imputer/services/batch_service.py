"""
Forward and cyclic (backward) generator inputs.

Tensors follow torch layout: a sprite is (C, H, W) in [-1, 1], a source set is
(num_domains, C, H, W) and a target label is (num_domains, H, W).
"""
import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from sprite_imputer.exceptions import ContractViolationError
from sprite_imputer.schemas.domain import ALL_DOMAINS, NUM_DOMAINS, DomainId, other_domains
from sprite_imputer.schemas.sprite import SPRITE_CHANNELS, SPRITE_SIZE, CharacterSheet
from sprite_imputer.schemas.training import DropoutKind, DropoutStrategy, ReplacementKind, ReplacementStrategy
from sprite_imputer.services.dataset_service import hue_rotate_pixels

logger = logging.getLogger(__name__)

MAX_DROPPED = 2
SheetLike = Union[CharacterSheet, torch.Tensor]


class SlotOrigin(str, Enum):
    REAL = "real"
    ZERO = "zero"
    GENERATED = "generated"


@dataclass(frozen=True)
class TargetLabel:
    domain: DomainId
    spatial_map: torch.Tensor  # (num_domains, H, W), one channel all ones


@dataclass(frozen=True)
class SourceSet:
    slots: torch.Tensor  # (num_domains, C, H, W)
    origins: Tuple[SlotOrigin, ...]
    target: DomainId

    @property
    def mask(self) -> Tuple[bool, ...]:
        return tuple(origin != SlotOrigin.ZERO for origin in self.origins)


@dataclass(frozen=True)
class TrainingExample:
    """One sampled batch element: augmented sheet, target pose and dropped poses."""
    sheet: torch.Tensor
    target: DomainId
    dropped: FrozenSet[DomainId]


def to_model_range(pixels: np.ndarray) -> torch.Tensor:
    """uint8 (..., H, W, C) -> float32 (..., C, H, W) in [-1, 1]."""
    tensor = torch.from_numpy(np.ascontiguousarray(pixels)).to(torch.float32)
    return (tensor / 127.5 - 1.0).movedim(-1, -3).contiguous()


def from_model_range(tensor: torch.Tensor) -> np.ndarray:
    """float (..., C, H, W) in [-1, 1] -> uint8 (..., H, W, C)."""
    values = ((tensor.detach().cpu().to(torch.float32) + 1.0) * 127.5).round().clamp(0, 255)
    return values.movedim(-3, -1).to(torch.uint8).numpy()


def sheet_tensor(sheet: SheetLike) -> torch.Tensor:
    if isinstance(sheet, CharacterSheet):
        return to_model_range(sheet.stacked())
    expected = (NUM_DOMAINS, SPRITE_CHANNELS, SPRITE_SIZE, SPRITE_SIZE)
    if tuple(sheet.shape) != expected:
        message = f"Sheet tensor must have shape {expected}, got {tuple(sheet.shape)}"
        logger.error(message)
        raise ContractViolationError(message)
    return sheet


def spatial_one_hot(t: DomainId, size: int = SPRITE_SIZE) -> TargetLabel:
    spatial_map = torch.zeros(NUM_DOMAINS, size, size)
    spatial_map[int(t)] = 1.0
    return TargetLabel(domain=DomainId(t), spatial_map=spatial_map)


def curriculum_phase(strategy: DropoutStrategy, step: int, total_steps: int) -> Optional[int]:
    """
    Forced drop count during the curriculum, None once it is over.

    The curriculum spans the first ``curriculum_end_fraction`` of training, split into
    three equal phases dropping 0, then 1, then 2 sources. Phase edges are floored
    from the unfloored span, so with the default half they fall at floor(total/6)
    and floor(total/3).
    """
    end = total_steps * strategy.curriculum_end_fraction
    if step >= end:
        return None
    if step < math.floor(end / 3):
        return 0
    if step < math.floor(2 * end / 3):
        return 1
    return 2


def sample_drop_count(strategy: DropoutStrategy, step: int, total_steps: int,
                      rng: np.random.Generator) -> int:
    if not 0 <= step < total_steps:
        message = f"step must be in [0, {total_steps}), got {step}"
        logger.error(message)
        raise ContractViolationError(message)

    if strategy.kind == DropoutKind.NONE:
        return 0
    if strategy.kind == DropoutKind.CURRICULUM:
        forced = curriculum_phase(strategy, step, total_steps)
        if forced is not None:
            return forced
    return int(rng.choice(MAX_DROPPED + 1, p=strategy.drop_probabilities))


def sample_target(rng: np.random.Generator) -> DomainId:
    return DomainId(int(rng.integers(NUM_DOMAINS)))


def sample_dropped(t: DomainId, k: int, rng: np.random.Generator) -> FrozenSet[DomainId]:
    """Uniform choice among the C(3, k) subsets of the non-target poses."""
    if not 0 <= k <= MAX_DROPPED:
        message = f"Drop count must be in [0, {MAX_DROPPED}], got {k}"
        logger.error(message)
        raise ContractViolationError(message)
    subsets = list(itertools.combinations(other_domains(t), k))
    return frozenset(subsets[int(rng.integers(len(subsets)))])


def _check_dropped(t: DomainId, dropped: Iterable[DomainId]) -> FrozenSet[DomainId]:
    dropped = frozenset(DomainId(d) for d in dropped)
    if t in dropped:
        message = f"Dropped poses {sorted(d.pose_name for d in dropped)} include the target '{t.pose_name}'"
        logger.error(message)
        raise ContractViolationError(message)
    if len(dropped) > MAX_DROPPED:
        message = f"At most {MAX_DROPPED} poses can be dropped, got {len(dropped)}"
        logger.error(message)
        raise ContractViolationError(message)
    return dropped


def build_forward_input(sheet: SheetLike, t: DomainId, dropped: Iterable[DomainId] = (),
                        rng: Optional[np.random.Generator] = None) -> Tuple[SourceSet, TargetLabel]:
    """
    {x_s for s kept} with zeros in the target slot and in every dropped slot.

    When ``rng`` is given the sheet is first hue-rotated by a uniform angle.
    """
    t = DomainId(t)
    dropped = _check_dropped(t, dropped)
    if rng is not None:
        if not isinstance(sheet, CharacterSheet):
            raise ContractViolationError("Hue augmentation needs a CharacterSheet")
        sheet = to_model_range(hue_rotate_pixels(sheet.stacked(), rng.uniform(0.0, 360.0)))
    real = sheet_tensor(sheet)

    slots, origins = [], []
    for domain in ALL_DOMAINS:
        if domain == t or domain in dropped:
            slots.append(torch.zeros_like(real[domain]))
            origins.append(SlotOrigin.ZERO)
        else:
            slots.append(real[domain])
            origins.append(SlotOrigin.REAL)
    return SourceSet(torch.stack(slots), tuple(origins), t), spatial_one_hot(t, real.shape[-1])


def build_backward_inputs(sheet: SheetLike, t: DomainId, x_hat: torch.Tensor,
                          dropped: Iterable[DomainId], strategy: ReplacementStrategy) -> List[Tuple[SourceSet, TargetLabel]]:
    """
    One cyclic input per source pose s != t, in canonical order.

    The target slot always receives x_hat and slot s is zeroed. Dropped slots get
    x_hat under the original strategy and stay zero under forward_only.
    """
    t = DomainId(t)
    dropped = _check_dropped(t, dropped)
    real = sheet_tensor(sheet)
    if tuple(x_hat.shape) != tuple(real.shape[1:]):
        message = f"Generated sprite must have shape {tuple(real.shape[1:])}, got {tuple(x_hat.shape)}"
        logger.error(message)
        raise ContractViolationError(message)
    replace_dropped = strategy.kind == ReplacementKind.ORIGINAL

    inputs = []
    for s in other_domains(t):
        slots, origins = [], []
        for domain in ALL_DOMAINS:
            if domain == s:
                slots.append(torch.zeros_like(x_hat))
                origins.append(SlotOrigin.ZERO)
            elif domain == t or (domain in dropped and replace_dropped):
                slots.append(x_hat)
                origins.append(SlotOrigin.GENERATED)
            elif domain in dropped:
                slots.append(torch.zeros_like(x_hat))
                origins.append(SlotOrigin.ZERO)
            else:
                slots.append(real[domain])
                origins.append(SlotOrigin.REAL)
        inputs.append((SourceSet(torch.stack(slots), tuple(origins), s), spatial_one_hot(s, real.shape[-1])))
    return inputs


def collate(pairs: Sequence[Tuple[SourceSet, TargetLabel]]) -> Tuple[torch.Tensor, torch.Tensor]:
    """Stack (SourceSet, TargetLabel) pairs into generator batch tensors."""
    if not pairs:
        raise ContractViolationError("Cannot collate an empty batch")
    sources = torch.stack([source.slots for source, _ in pairs])
    labels = torch.stack([label.spatial_map for _, label in pairs])
    return sources, labels


def sample_training_examples(sheets: Sequence[CharacterSheet], strategy: DropoutStrategy, step: int,
                             total_steps: int, rng: np.random.Generator,
                             hue_augmentation: bool = True) -> List[TrainingExample]:
    """Draw target, drop count, dropped subset and hue angle independently per element."""
    examples = []
    for sheet in sheets:
        t = sample_target(rng)
        k = sample_drop_count(strategy, step, total_steps, rng)
        dropped = sample_dropped(t, k, rng)
        pixels = sheet.stacked()
        if hue_augmentation:
            pixels = hue_rotate_pixels(pixels, rng.uniform(0.0, 360.0))
        examples.append(TrainingExample(sheet=to_model_range(pixels), target=t, dropped=dropped))
    return examples
