import logging
from typing import List, NamedTuple, Optional

import torch
from torch import nn

from sprite_imputer.exceptions import ContractViolationError
from sprite_imputer.models.generator import init_weights
from sprite_imputer.schemas.networks import DiscriminatorConfig

logger = logging.getLogger(__name__)


class DiscriminatorOutput(NamedTuple):
    adv: torch.Tensor  # (B,) unbounded real/fake score
    domain_probs: torch.Tensor  # (B, num_domains), rows sum to 1


class Discriminator(nn.Module):
    """Six halving conv blocks down to 1x1, then parallel adversarial and domain heads."""

    def __init__(self, config: Optional[DiscriminatorConfig] = None):
        super().__init__()
        self.config = config or DiscriminatorConfig()
        cfg = self.config
        padding = (cfg.kernel_size - cfg.stride) // 2

        layers: List[nn.Module] = []
        in_channels = cfg.image_channels
        for width in cfg.block_widths:
            layers.append(nn.Conv2d(in_channels, width, cfg.kernel_size, stride=cfg.stride,
                                    padding=padding, bias=False))
            layers.append(nn.LeakyReLU(cfg.negative_slope))
            in_channels = width
        layers.append(nn.Dropout(cfg.dropout_rate))
        self.features = nn.Sequential(*layers)

        self.adv_head = nn.Conv2d(in_channels, 1, 1, bias=False)
        self.domain_head = nn.Conv2d(in_channels, cfg.num_domains, 1, bias=False)
        self.apply(init_weights)

    def forward(self, images: torch.Tensor) -> DiscriminatorOutput:
        cfg = self.config
        expected = (cfg.image_channels, cfg.image_size, cfg.image_size)
        if images.dim() != 4 or tuple(images.shape[1:]) != expected:
            message = f"Discriminator input must be (B, {expected}), got {tuple(images.shape)}"
            logger.error(message)
            raise ContractViolationError(message)

        features = self.features(images)
        adv = self.adv_head(features).flatten(1).squeeze(1)
        logits = self.domain_head(features).flatten(1)
        return DiscriminatorOutput(adv=adv, domain_probs=torch.softmax(logits, dim=1))
