"""
Procedural humanoid sprites for desk-scale experiments.

Every character is a parameter vector drawn from its own seeded stream; the four
poses are deterministic renderings of that vector, and the left pose is the exact
horizontal mirror of the right pose.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from matplotlib.colors import hsv_to_rgb
from PIL import Image, ImageDraw, ImageOps
from pydantic import BaseModel, ConfigDict, Field, model_validator

from sprite_imputer.schemas.domain import DomainId
from sprite_imputer.schemas.sprite import SPRITE_SIZE, CharacterSheet, SpriteDataset

logger = logging.getLogger(__name__)

RGBA = Tuple[int, int, int, int]


class SynthStyle(BaseModel):
    """Shape and palette controls for the synthetic characters."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    min_height: int = Field(34, ge=16, le=SPRITE_SIZE - 4)
    max_height: int = Field(58, ge=16, le=SPRITE_SIZE - 4)
    outline: bool = True
    hat_probability: float = Field(0.35, ge=0, le=1)
    min_saturation: float = Field(0.35, ge=0, le=1)
    min_value: float = Field(0.35, ge=0, le=1)

    @model_validator(mode="after")
    def validate_heights(self) -> "SynthStyle":
        if self.min_height > self.max_height:
            raise ValueError("min_height must not exceed max_height")
        return self


@dataclass(frozen=True)
class CharacterParams:
    height: int
    head: int
    torso_width: int
    leg_ratio: float
    arm_width: int
    hat: bool
    long_hair: bool
    skin: RGBA
    hair: RGBA
    shirt: RGBA
    pants: RGBA
    shoes: RGBA
    eyes: RGBA


def _random_color(rng: np.random.Generator, style: SynthStyle) -> RGBA:
    hsv = np.array([rng.uniform(0, 1), rng.uniform(style.min_saturation, 1), rng.uniform(style.min_value, 1)])
    r, g, b = (np.round(hsv_to_rgb(hsv) * 255)).astype(int)
    return int(r), int(g), int(b), 255


def _shade(color: RGBA, factor: float) -> RGBA:
    return tuple(int(round(c * factor)) for c in color[:3]) + (255,)


def sample_params(rng: np.random.Generator, style: SynthStyle) -> CharacterParams:
    height = int(rng.integers(style.min_height, style.max_height + 1))
    skin_tones = [(255, 220, 180, 255), (230, 180, 140, 255), (190, 140, 100, 255), (140, 95, 65, 255)]
    return CharacterParams(
        height=height,
        head=max(6, int(round(height * rng.uniform(0.22, 0.3)))),
        torso_width=max(6, int(round(height * rng.uniform(0.26, 0.36)))),
        leg_ratio=float(rng.uniform(0.36, 0.46)),
        arm_width=int(rng.integers(2, 4)),
        hat=bool(rng.uniform() < style.hat_probability),
        long_hair=bool(rng.uniform() < 0.4),
        skin=skin_tones[int(rng.integers(len(skin_tones)))],
        hair=_random_color(rng, style),
        shirt=_random_color(rng, style),
        pants=_random_color(rng, style),
        shoes=_shade(_random_color(rng, style), 0.5),
        eyes=(20, 20, 30, 255),
    )


class _Layout:
    """Vertical body measurements shared by every pose."""

    def __init__(self, p: CharacterParams):
        self.center = SPRITE_SIZE // 2
        self.bottom = (SPRITE_SIZE + p.height) // 2 - 1
        self.top = self.bottom - p.height + 1
        self.head_top = self.top
        self.head_bottom = self.top + p.head - 1
        self.leg_length = max(4, int(round(p.height * p.leg_ratio)))
        self.hip = self.bottom - self.leg_length
        self.torso_top = self.head_bottom + 1


def _draw_front_or_back(p: CharacterParams, back: bool, style: SynthStyle) -> Image.Image:
    image = Image.new("RGBA", (SPRITE_SIZE, SPRITE_SIZE), (0, 0, 0, 0))
    draw = ImageDraw.Draw(image)
    g = _Layout(p)
    half_torso = p.torso_width // 2
    half_head = p.head // 2
    outline = _shade(p.shirt, 0.35) if style.outline else None

    # legs
    leg_w = max(2, half_torso - 1)
    for side in (-1, 1):
        x0 = g.center + (1 if side > 0 else -leg_w - 1)
        draw.rectangle([x0, g.hip, x0 + leg_w - 1, g.bottom - 2], fill=p.pants)
        draw.rectangle([x0, g.bottom - 1, x0 + leg_w - 1, g.bottom], fill=p.shoes)
    # arms
    for side in (-1, 1):
        x0 = g.center + side * (half_torso + 1) - (p.arm_width - 1 if side < 0 else 0)
        draw.rectangle([x0, g.torso_top + 1, x0 + p.arm_width - 1, g.hip + 2], fill=_shade(p.shirt, 0.85))
        draw.rectangle([x0, g.hip + 3, x0 + p.arm_width - 1, g.hip + 4], fill=p.skin)
    # torso
    draw.rectangle([g.center - half_torso, g.torso_top, g.center + half_torso - 1, g.hip],
                   fill=p.shirt, outline=outline)
    # head
    head_box = [g.center - half_head, g.head_top, g.center + half_head - 1, g.head_bottom]
    draw.ellipse(head_box, fill=p.hair if back else p.skin)
    hair_bottom = g.head_top + max(1, p.head // 3)
    draw.rectangle([head_box[0], g.head_top, head_box[2], hair_bottom], fill=p.hair)
    if p.long_hair:
        draw.rectangle([head_box[0] - 1, g.head_top + 1, head_box[0], g.head_bottom + 2], fill=p.hair)
        draw.rectangle([head_box[2], g.head_top + 1, head_box[2] + 1, g.head_bottom + 2], fill=p.hair)
        if back:
            draw.rectangle([head_box[0], g.head_bottom, head_box[2], g.head_bottom + 2], fill=p.hair)
    if not back:
        eye_y = g.head_top + p.head // 2
        offset = max(1, p.head // 4)
        draw.point([(g.center - offset - 1, eye_y), (g.center + offset, eye_y)], fill=p.eyes)
    else:
        draw.line([g.center, g.torso_top + 1, g.center, g.hip - 1], fill=_shade(p.shirt, 0.7))
    if p.hat:
        draw.rectangle([head_box[0] - 2, g.head_top - 1, head_box[2] + 2, g.head_top], fill=_shade(p.hair, 0.6))
        draw.rectangle([head_box[0], g.head_top - 3, head_box[2], g.head_top - 1], fill=_shade(p.hair, 0.6))
    return image


def _draw_right(p: CharacterParams, style: SynthStyle) -> Image.Image:
    image = Image.new("RGBA", (SPRITE_SIZE, SPRITE_SIZE), (0, 0, 0, 0))
    draw = ImageDraw.Draw(image)
    g = _Layout(p)
    depth = max(4, int(round(p.torso_width * 0.6)))
    half_depth = depth // 2
    half_head = p.head // 2
    outline = _shade(p.shirt, 0.35) if style.outline else None

    # legs: back leg slightly behind, front leg stepping forward
    leg_w = max(2, half_depth)
    draw.rectangle([g.center - leg_w, g.hip, g.center - 1, g.bottom - 2], fill=_shade(p.pants, 0.8))
    draw.rectangle([g.center - leg_w, g.bottom - 1, g.center, g.bottom], fill=p.shoes)
    draw.rectangle([g.center, g.hip, g.center + leg_w - 1, g.bottom - 2], fill=p.pants)
    draw.rectangle([g.center, g.bottom - 1, g.center + leg_w + 1, g.bottom], fill=p.shoes)
    # torso
    draw.rectangle([g.center - half_depth, g.torso_top, g.center + half_depth - 1, g.hip],
                   fill=p.shirt, outline=outline)
    # arm in front of the torso
    draw.rectangle([g.center - 1, g.torso_top + 1, g.center - 2 + p.arm_width, g.hip + 2], fill=_shade(p.shirt, 0.85))
    draw.rectangle([g.center - 1, g.hip + 3, g.center - 2 + p.arm_width, g.hip + 4], fill=p.skin)
    # head, facing right: hair at the back (left), eye and nose at the front
    head_box = [g.center - half_head, g.head_top, g.center + half_head - 1, g.head_bottom]
    draw.ellipse(head_box, fill=p.skin)
    draw.rectangle([head_box[0], g.head_top, head_box[2], g.head_top + max(1, p.head // 3)], fill=p.hair)
    draw.rectangle([head_box[0], g.head_top, g.center - 1, g.head_top + p.head // 2], fill=p.hair)
    if p.long_hair:
        draw.rectangle([head_box[0] - 1, g.head_top + 1, head_box[0] + 1, g.head_bottom + 2], fill=p.hair)
    eye_y = g.head_top + p.head // 2
    draw.point([(g.center + max(1, half_head // 2), eye_y)], fill=p.eyes)
    draw.point([(head_box[2] + 1, eye_y + 1)], fill=p.skin)
    if p.hat:
        draw.rectangle([head_box[0] - 1, g.head_top - 1, head_box[2] + 3, g.head_top], fill=_shade(p.hair, 0.6))
        draw.rectangle([head_box[0], g.head_top - 3, head_box[2], g.head_top - 1], fill=_shade(p.hair, 0.6))
    return image


def render_character(params: CharacterParams, style: SynthStyle) -> Dict[DomainId, np.ndarray]:
    right = _draw_right(params, style)
    return {
        DomainId.BACK: np.array(_draw_front_or_back(params, back=True, style=style), dtype=np.uint8),
        DomainId.LEFT: np.array(ImageOps.mirror(right), dtype=np.uint8),
        DomainId.FRONT: np.array(_draw_front_or_back(params, back=False, style=style), dtype=np.uint8),
        DomainId.RIGHT: np.array(right, dtype=np.uint8),
    }


def synth_dataset(n: int, seed: int, style: Optional[SynthStyle] = None) -> SpriteDataset:
    """
    Generate ``n`` synthetic characters.

    Character ``i`` depends only on (seed, i), so a larger ``n`` extends a smaller one.
    """
    if n < 0:
        raise ValueError(f"Character count must be non-negative, got {n}")
    style = style or SynthStyle()
    streams = np.random.SeedSequence(seed).spawn(n)
    sheets = []
    for index, stream in enumerate(streams):
        params = sample_params(np.random.default_rng(stream), style)
        pixels = render_character(params, style)
        sheets.append(CharacterSheet.from_stacked(f"synth_{index:05d}", np.stack([pixels[d] for d in DomainId])))
    logger.info(f"Synthesized {n} characters with seed {seed}")
    return SpriteDataset(sheets=tuple(sheets), name=f"synth-{seed}")
