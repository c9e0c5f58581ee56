"""
Four-branch encoder / single-decoder generator.

Every pose slot has its own encoder branch, fed with the slot concatenated with the
spatial one-hot target label. Branch outputs meet at the bottleneck; the decoder
receives, at every resolution, the concatenated activations of all four branches.
"""
import logging
from typing import List, Optional, Tuple

import torch
from torch import nn

from sprite_imputer.exceptions import ContractViolationError
from sprite_imputer.schemas.networks import GeneratorConfig, NormalizationKind

logger = logging.getLogger(__name__)


def param_count(module: nn.Module) -> int:
    """Exact number of learnable scalars."""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def init_weights(module: nn.Module, gain: float = 0.02) -> None:
    """Normal(0, gain) convolutions, Normal(1, gain) norm scales, zero biases."""
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
        nn.init.normal_(module.weight, 0.0, gain)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.InstanceNorm2d) and module.affine:
        nn.init.normal_(module.weight, 1.0, gain)
        nn.init.zeros_(module.bias)


class ConvUnit(nn.Sequential):
    """Resolution-preserving conv, optional instance norm, activation."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 normalize: bool, activation: nn.Module):
        # a bias in front of instance norm is cancelled by the mean subtraction
        layers: List[nn.Module] = [
            nn.Conv2d(in_channels, out_channels, kernel_size, padding=kernel_size // 2, bias=not normalize)
        ]
        if normalize:
            layers.append(nn.InstanceNorm2d(out_channels, affine=True))
        layers.append(activation)
        super().__init__(*layers)


class EncoderBranch(nn.Module):
    def __init__(self, config: GeneratorConfig):
        super().__init__()
        widths = config.branch_widths
        normalize = config.normalization == NormalizationKind.INSTANCE
        stride = config.sampling_kernel_size

        self.levels = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        in_channels = config.image_channels + config.num_domains
        for level, width in enumerate(widths):
            units = []
            for index in range(config.convs_per_block):
                units.append(ConvUnit(
                    in_channels if index == 0 else width,
                    width,
                    config.kernel_size,
                    normalize=normalize and level != 0,
                    activation=nn.LeakyReLU(config.encoder_negative_slope),
                ))
            self.levels.append(nn.Sequential(*units))
            next_width = widths[level + 1] if level + 1 < len(widths) else config.bottleneck_width
            self.downsamples.append(nn.Conv2d(width, next_width, stride, stride=stride, bias=False))
            in_channels = next_width

    def forward(self, x: torch.Tensor) -> Tuple[List[torch.Tensor], torch.Tensor]:
        skips = []
        for level, downsample in zip(self.levels, self.downsamples):
            x = level(x)
            skips.append(x)
            x = downsample(x)
        return skips, x


class Generator(nn.Module):
    """
    x_hat = G(sources, label).

    Args (forward):
        sources: (B, 4, C, H, W) pose slots in canonical order, values in [-1, 1]
        labels: (B, 4, H, W) spatial one-hot target label

    Returns:
        (B, C, H, W) generated sprite in [-1, 1]
    """

    def __init__(self, config: Optional[GeneratorConfig] = None):
        super().__init__()
        self.config = config or GeneratorConfig()
        cfg = self.config
        widths = cfg.branch_widths
        branches = cfg.num_domains
        normalize = cfg.normalization == NormalizationKind.INSTANCE
        stride = cfg.sampling_kernel_size

        self.branches = nn.ModuleList(EncoderBranch(cfg) for _ in range(branches))

        bottleneck_units = []
        for index in range(cfg.convs_per_block):
            in_channels = branches * cfg.bottleneck_width if index == 0 else cfg.bottleneck_width
            bottleneck_units.append(ConvUnit(in_channels, cfg.bottleneck_width, cfg.kernel_size, normalize, nn.ReLU()))
        self.bottleneck = nn.Sequential(*bottleneck_units)

        self.upsamples = nn.ModuleList()
        self.levels = nn.ModuleList()
        in_channels = cfg.bottleneck_width
        for width in reversed(widths):
            self.upsamples.append(nn.ConvTranspose2d(in_channels, width, stride, stride=stride))
            units = []
            for index in range(cfg.convs_per_block):
                # first unit sees the upsampled map plus the skips of every branch
                unit_in = width * (branches + 1) if index == 0 else width
                units.append(ConvUnit(unit_in, width, cfg.kernel_size, normalize, nn.ReLU()))
            self.levels.append(nn.Sequential(*units))
            in_channels = width

        self.output = nn.Sequential(
            nn.Conv2d(widths[0], cfg.image_channels, 1, bias=False),
            nn.Tanh(),
        )
        self.apply(init_weights)

    def _check_inputs(self, sources: torch.Tensor, labels: torch.Tensor) -> None:
        cfg = self.config
        expected_sources = (cfg.num_domains, cfg.image_channels, cfg.image_size, cfg.image_size)
        expected_labels = (cfg.num_domains, cfg.image_size, cfg.image_size)
        if sources.dim() != 5 or tuple(sources.shape[1:]) != expected_sources:
            message = f"Generator sources must be (B, {expected_sources}), got {tuple(sources.shape)}"
            logger.error(message)
            raise ContractViolationError(message)
        if labels.dim() != 4 or tuple(labels.shape[1:]) != expected_labels or labels.shape[0] != sources.shape[0]:
            message = f"Generator labels must be (B, {expected_labels}), got {tuple(labels.shape)}"
            logger.error(message)
            raise ContractViolationError(message)

    def forward(self, sources: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        self._check_inputs(sources, labels)
        branch_skips = []
        branch_outputs = []
        for index, branch in enumerate(self.branches):
            skips, out = branch(torch.cat([sources[:, index], labels], dim=1))
            branch_skips.append(skips)
            branch_outputs.append(out)

        x = self.bottleneck(torch.cat(branch_outputs, dim=1))
        for depth, (upsample, level) in enumerate(zip(self.upsamples, self.levels)):
            resolution = len(self.levels) - 1 - depth
            skip = torch.cat([skips[resolution] for skips in branch_skips], dim=1)
            x = level(torch.cat([upsample(x), skip], dim=1))
        return self.output(x)

    def shape_trace(self) -> List[Tuple[str, Tuple[int, ...]]]:
        """Per-stage (name, (C, H, W)) shapes for one sample, derived from the config."""
        cfg = self.config
        size = cfg.image_size
        trace = []
        for level, width in enumerate(cfg.branch_widths):
            trace.append((f"branch_skip_{level}", (width, size, size)))
            size //= cfg.sampling_kernel_size
        trace.append(("branch_output", (cfg.bottleneck_width, size, size)))
        trace.append(("bottleneck_input", (cfg.num_domains * cfg.bottleneck_width, size, size)))
        trace.append(("bottleneck_output", (cfg.bottleneck_width, size, size)))
        for width in reversed(cfg.branch_widths):
            size *= cfg.sampling_kernel_size
            trace.append((f"decoder_{size}", (width, size, size)))
        trace.append(("output", (cfg.image_channels, size, size)))
        return trace
