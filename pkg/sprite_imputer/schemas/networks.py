from enum import Enum
from typing import List

from pydantic import BaseModel, ConfigDict, Field, model_validator


class NormalizationKind(str, Enum):
    INSTANCE = "instance"
    NONE = "none"


def scale_width(channels: int, width_multiplier: float) -> int:
    """Scale a channel count, never below one channel."""
    return max(1, int(round(channels * width_multiplier)))


class GeneratorConfig(BaseModel):
    """
    Four-branch encoder / single-decoder generator.

    Each branch runs ``convs_per_block`` conv units at every resolution listed in
    ``branch_channels`` and then downsamples; the last downsampling emits
    ``bottleneck_channels``. The bottleneck fuses the four branch outputs and the
    decoder mirrors the encoder with cross-branch skip connections.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    image_size: int = Field(64, ge=16)
    image_channels: int = Field(4, ge=1)
    num_domains: int = Field(4, ge=2)
    branch_channels: List[int] = Field(default_factory=lambda: [64, 128, 256, 512])
    bottleneck_channels: int = Field(1024, ge=1)
    decoder_channels: List[int] = Field(default_factory=lambda: [1024, 512, 256, 128, 64])
    width_multiplier: float = Field(1.0, gt=0)
    kernel_size: int = Field(3, ge=1, description="Kernel of the conv units at each resolution")
    sampling_kernel_size: int = Field(2, ge=2, description="Kernel and stride of down/upsampling")
    convs_per_block: int = Field(2, ge=1)
    normalization: NormalizationKind = NormalizationKind.INSTANCE
    encoder_negative_slope: float = Field(0.2, ge=0)
    output_activation: str = "tanh"

    @model_validator(mode="after")
    def validate_topology(self) -> "GeneratorConfig":
        if len(self.branch_channels) != 4:
            raise ValueError("branch_channels must list 4 downsampling blocks")
        expected_decoder = [self.bottleneck_channels] + list(reversed(self.branch_channels))
        if list(self.decoder_channels) != expected_decoder:
            raise ValueError(f"decoder_channels must mirror the encoder: expected {expected_decoder}")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd so conv units preserve resolution")
        factor = self.sampling_kernel_size ** len(self.branch_channels)
        if self.image_size % factor != 0:
            raise ValueError(f"image_size {self.image_size} is not divisible by {factor}")
        if self.output_activation != "tanh":
            raise ValueError("only the tanh output activation is supported")
        return self

    @property
    def branch_widths(self) -> List[int]:
        return [scale_width(c, self.width_multiplier) for c in self.branch_channels]

    @property
    def bottleneck_width(self) -> int:
        return scale_width(self.bottleneck_channels, self.width_multiplier)

    @property
    def bottleneck_size(self) -> int:
        return self.image_size // self.sampling_kernel_size ** len(self.branch_channels)

    @classmethod
    def original_collagan(cls) -> "GeneratorConfig":
        """Original CollaGAN widths (a quarter of the default filters per branch)."""
        return cls(width_multiplier=0.25)


class DiscriminatorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    image_size: int = Field(64, ge=2)
    image_channels: int = Field(4, ge=1)
    num_domains: int = Field(4, ge=2)
    block_channels: List[int] = Field(default_factory=lambda: [64, 128, 256, 512, 1024, 2048])
    dropout_rate: float = Field(0.5, ge=0, lt=1)
    kernel_size: int = Field(4, ge=2)
    stride: int = Field(2, ge=2)
    negative_slope: float = Field(0.2, ge=0)
    width_multiplier: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def validate_topology(self) -> "DiscriminatorConfig":
        if len(self.block_channels) != 6:
            raise ValueError("block_channels must list 6 downsampling blocks")
        if self.image_size != self.stride ** len(self.block_channels):
            raise ValueError(
                f"image_size {self.image_size} must reduce to 1x1 after {len(self.block_channels)} blocks"
            )
        return self

    @property
    def block_widths(self) -> List[int]:
        return [scale_width(c, self.width_multiplier) for c in self.block_channels]
