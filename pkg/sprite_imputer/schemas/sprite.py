"""Raster containers: Sprite, CharacterSheet and SpriteDataset."""
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from sprite_imputer.schemas.domain import ALL_DOMAINS, DomainId

SPRITE_SIZE = 64
SPRITE_CHANNELS = 4
SPRITE_SHAPE = (SPRITE_SIZE, SPRITE_SIZE, SPRITE_CHANNELS)


class Sprite(BaseModel):
    """A 64x64 RGBA raster stored as read-only uint8 (H, W, 4)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    pixels: np.ndarray

    @field_validator("pixels")
    @classmethod
    def validate_pixels(cls, value: np.ndarray) -> np.ndarray:
        array = np.asarray(value)
        if array.shape != SPRITE_SHAPE:
            raise ValueError(f"Sprite must have shape {SPRITE_SHAPE}, got {array.shape}")
        if array.dtype != np.uint8:
            raise ValueError(f"Sprite pixels must be uint8, got {array.dtype}")
        array = np.array(array, copy=True)
        array.setflags(write=False)
        return array

    @property
    def alpha(self) -> np.ndarray:
        return self.pixels[..., 3]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Sprite):
            return NotImplemented
        return bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self) -> int:
        return hash(self.pixels.tobytes())


class CharacterSheet(BaseModel):
    """One character: an aligned sprite for every pose."""
    model_config = ConfigDict(frozen=True)

    id: str
    sprites: Dict[DomainId, Sprite]

    @model_validator(mode="after")
    def validate_complete(self) -> "CharacterSheet":
        missing = [d.pose_name for d in ALL_DOMAINS if d not in self.sprites]
        if missing:
            raise ValueError(f"Character '{self.id}' is missing poses: {missing}")
        return self

    def sprite(self, domain: DomainId) -> Sprite:
        return self.sprites[domain]

    def stacked(self) -> np.ndarray:
        """All four poses in canonical order as uint8 (4, 64, 64, 4)."""
        return np.stack([self.sprites[d].pixels for d in ALL_DOMAINS])

    @classmethod
    def from_stacked(cls, sheet_id: str, pixels: np.ndarray) -> "CharacterSheet":
        return cls(id=sheet_id, sprites={d: Sprite(pixels=pixels[d]) for d in ALL_DOMAINS})


class SpriteDataset(BaseModel):
    """Ordered, immutable collection of character sheets."""
    model_config = ConfigDict(frozen=True)

    sheets: Tuple[CharacterSheet, ...] = ()
    split_tag: Literal["train", "test", "all"] = "all"
    name: str = "dataset"

    @model_validator(mode="after")
    def validate_unique_ids(self) -> "SpriteDataset":
        seen = set()
        for sheet in self.sheets:
            if sheet.id in seen:
                raise ValueError(f"Duplicate character id in dataset: {sheet.id}")
            seen.add(sheet.id)
        return self

    def __len__(self) -> int:
        return len(self.sheets)

    def ids(self) -> List[str]:
        return [sheet.id for sheet in self.sheets]

    def subset(self, indices: Sequence[int], split_tag: Optional[str] = None) -> "SpriteDataset":
        return SpriteDataset(
            sheets=tuple(self.sheets[i] for i in indices),
            split_tag=split_tag or self.split_tag,
            name=self.name,
        )
