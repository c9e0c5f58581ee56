from typing import Dict, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from sprite_imputer.schemas.domain import DomainId
from sprite_imputer.schemas.sprite import Sprite

Color = Tuple[int, int, int, int]


class ImputationRequest(BaseModel):
    """Available poses of one character plus the pose to generate."""
    model_config = ConfigDict(frozen=True)

    available: Dict[DomainId, Sprite]
    target: DomainId
    quantize: bool = False

    @model_validator(mode="after")
    def validate_request(self) -> "ImputationRequest":
        if not self.available:
            raise ValueError("At least one available sprite is required")
        if self.target in self.available:
            raise ValueError(f"Target pose '{self.target.pose_name}' is already available")
        return self


class Palette(BaseModel):
    """Ordered set of distinct RGBA colors."""
    model_config = ConfigDict(frozen=True)

    colors: Tuple[Color, ...]

    @field_validator("colors")
    @classmethod
    def validate_colors(cls, value: Tuple[Color, ...]) -> Tuple[Color, ...]:
        if not value:
            raise ValueError("Palette must contain at least one color")
        if len(set(value)) != len(value):
            raise ValueError("Palette colors must be distinct")
        for color in value:
            if any(channel < 0 or channel > 255 for channel in color):
                raise ValueError(f"Palette color out of 8-bit range: {color}")
        return value

    def __len__(self) -> int:
        return len(self.colors)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.colors, dtype=np.uint8).reshape(-1, 4)
