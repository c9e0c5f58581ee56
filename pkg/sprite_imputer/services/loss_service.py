"""
Objective terms.

Generator:     L_G = adv_g + l_reg*reg + l_mcyc*mcyc + l_ssim*ssim + l_dmn*dmn_fake
Discriminator: L_D = adv_d + l_dmn*dmn_real
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import torch
import torch.nn.functional as F

from sprite_imputer.exceptions import ContractViolationError
from sprite_imputer.schemas.metrics import LossBreakdown
from sprite_imputer.schemas.training import LossWeights

logger = logging.getLogger(__name__)

PROBABILITY_FLOOR = 1e-12
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
# pixels live in [-1, 1]
SSIM_DATA_RANGE = 2.0

Scalar = Union[torch.Tensor, float]


def _check_same_shape(x: torch.Tensor, y: torch.Tensor, name: str) -> None:
    if x.shape != y.shape:
        message = f"{name}: shape mismatch {tuple(x.shape)} vs {tuple(y.shape)}"
        logger.error(message)
        raise ContractViolationError(message)


def _check_pairs(xs: Sequence[torch.Tensor], ys: Sequence[torch.Tensor], name: str) -> None:
    if len(xs) != len(ys):
        message = f"{name}: {len(xs)} sources but {len(ys)} reconstructions"
        logger.error(message)
        raise ContractViolationError(message)
    if not xs:
        message = f"{name}: at least one source pair is required"
        logger.error(message)
        raise ContractViolationError(message)


def l_reg(x_t: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over every element."""
    _check_same_shape(x_t, x_hat, "l_reg")
    return (x_t - x_hat).abs().mean()


def l_mcyc(x_sources: Sequence[torch.Tensor], x_cyclic: Sequence[torch.Tensor]) -> torch.Tensor:
    """Sum over source poses of the per-pair mean absolute difference."""
    _check_pairs(x_sources, x_cyclic, "l_mcyc")
    return torch.stack([l_reg(x, y) for x, y in zip(x_sources, x_cyclic)]).sum()


def gaussian(kernel_size: int, sigma: float, dtype: torch.dtype = torch.float32,
             device: Union[str, torch.device] = "cpu") -> torch.Tensor:
    """Normalized 1-D Gaussian kernel."""
    coords = torch.arange(kernel_size, dtype=dtype, device=device) - (kernel_size - 1) / 2.0
    kernel = torch.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    return kernel / kernel.sum()


def ssim(x: torch.Tensor, y: torch.Tensor, window_size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA,
         k1: float = SSIM_K1, k2: float = SSIM_K2, data_range: float = SSIM_DATA_RANGE) -> torch.Tensor:
    """
    Mean structural similarity over valid Gaussian windows, channels and batch.

    Accepts (H, W), (C, H, W) or (B, C, H, W).
    """
    _check_same_shape(x, y, "ssim")
    while x.dim() < 4:
        x, y = x.unsqueeze(0), y.unsqueeze(0)
    if x.shape[-1] < window_size or x.shape[-2] < window_size:
        message = f"ssim: images of {tuple(x.shape[-2:])} are smaller than the {window_size}x{window_size} window"
        logger.error(message)
        raise ContractViolationError(message)

    channels = x.shape[1]
    window_1d = gaussian(window_size, sigma, x.dtype, x.device)
    window = torch.outer(window_1d, window_1d).expand(channels, 1, window_size, window_size).contiguous()

    def filt(z: torch.Tensor) -> torch.Tensor:
        return F.conv2d(z, window, groups=channels)

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_x, mu_y = filt(x), filt(y)
    mu_xx, mu_yy, mu_xy = mu_x * mu_x, mu_y * mu_y, mu_x * mu_y
    sigma_xx = filt(x * x) - mu_xx
    sigma_yy = filt(y * y) - mu_yy
    sigma_xy = filt(x * y) - mu_xy

    numerator = (2 * mu_xy + c1) * (2 * sigma_xy + c2)
    denominator = (mu_xx + mu_yy + c1) * (sigma_xx + sigma_yy + c2)
    return (numerator / denominator).mean()


def ssim_term(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """-log((1 + SSIM) / 2): zero for identical images, ln 2 for uncorrelated ones."""
    return -torch.log(((1.0 + ssim(x, y)) / 2.0).clamp_min(PROBABILITY_FLOOR))


def l_ssim(x_sources: Sequence[torch.Tensor], x_cyclic: Sequence[torch.Tensor]) -> torch.Tensor:
    _check_pairs(x_sources, x_cyclic, "l_ssim")
    return torch.stack([ssim_term(x, y) for x, y in zip(x_sources, x_cyclic)]).sum()


def _check_scores(scores: torch.Tensor, name: str) -> None:
    if scores.numel() == 0:
        message = f"{name}: score list is empty"
        logger.error(message)
        raise ContractViolationError(message)


def adv_d(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    """Least-squares discriminator loss: E[(D(real) - 1)^2] + E[D(fake)^2]."""
    _check_scores(real_scores, "adv_d")
    _check_scores(fake_scores, "adv_d")
    return ((real_scores - 1.0) ** 2).mean() + (fake_scores ** 2).mean()


def adv_g(fake_scores: torch.Tensor) -> torch.Tensor:
    """Least-squares generator loss: E[(D(fake) - 1)^2]."""
    _check_scores(fake_scores, "adv_g")
    return ((fake_scores - 1.0) ** 2).mean()


def dmn_loss(probs: torch.Tensor, true_domain: Union[torch.Tensor, int]) -> torch.Tensor:
    """Mean negative log-probability of the true pose, floored at 1e-12."""
    if probs.dim() == 1:
        probs = probs.unsqueeze(0)
    if not isinstance(true_domain, torch.Tensor):
        true_domain = torch.full((probs.shape[0],), int(true_domain), dtype=torch.long, device=probs.device)
    true_domain = true_domain.to(device=probs.device, dtype=torch.long).reshape(-1)
    if true_domain.shape[0] != probs.shape[0]:
        message = f"dmn_loss: {probs.shape[0]} probability rows but {true_domain.shape[0]} labels"
        logger.error(message)
        raise ContractViolationError(message)
    picked = probs.gather(1, true_domain.unsqueeze(1)).squeeze(1)
    return -torch.log(picked.clamp_min(PROBABILITY_FLOOR)).mean()


@dataclass
class GeneratorTerms:
    adv_g: Scalar
    reg: Scalar
    mcyc: Scalar
    ssim: Scalar
    dmn_fake: Scalar


@dataclass
class DiscriminatorTerms:
    adv_d: Scalar
    dmn_real: Scalar


def total_g(terms, weights: LossWeights) -> Scalar:
    """Works on tensors (for backprop) and on plain floats (LossBreakdown)."""
    return (terms.adv_g
            + weights.lambda_reg * terms.reg
            + weights.lambda_mcyc * terms.mcyc
            + weights.lambda_ssim * terms.ssim
            + weights.lambda_dmn * terms.dmn_fake)


def total_d(terms, weights: LossWeights) -> Scalar:
    return terms.adv_d + weights.lambda_dmn * terms.dmn_real


def _as_float(value: Scalar) -> float:
    return float(value.detach().item()) if isinstance(value, torch.Tensor) else float(value)


def make_breakdown(g_terms: GeneratorTerms, d_terms: DiscriminatorTerms, weights: LossWeights) -> LossBreakdown:
    """Float snapshot whose totals recompose exactly from its own terms."""
    g = GeneratorTerms(**{k: _as_float(v) for k, v in vars(g_terms).items()})
    d = DiscriminatorTerms(**{k: _as_float(v) for k, v in vars(d_terms).items()})
    return LossBreakdown(
        adv_g=g.adv_g, reg=g.reg, mcyc=g.mcyc, ssim=g.ssim, dmn_fake=g.dmn_fake,
        total_g=total_g(g, weights),
        adv_d=d.adv_d, dmn_real=d.dmn_real,
        total_d=total_d(d, weights),
    )


def first_non_finite(values: dict) -> Optional[str]:
    for name, value in values.items():
        if not math.isfinite(_as_float(value)):
            return name
    return None
