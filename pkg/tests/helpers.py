import numpy as np

from sprite_imputer.schemas.domain import ALL_DOMAINS
from sprite_imputer.schemas.sprite import SPRITE_SHAPE, CharacterSheet, Sprite


def solid_sprite(rgba) -> Sprite:
    pixels = np.zeros(SPRITE_SHAPE, dtype=np.uint8)
    pixels[...] = rgba
    return Sprite(pixels=pixels)


def random_sheet(sheet_id: str, seed: int) -> CharacterSheet:
    rng = np.random.default_rng(seed)
    sprites = {d: Sprite(pixels=rng.integers(0, 256, SPRITE_SHAPE, dtype=np.uint8)) for d in ALL_DOMAINS}
    return CharacterSheet(id=sheet_id, sprites=sprites)
