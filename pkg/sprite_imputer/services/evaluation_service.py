"""
L1 and FID between generated and real sprite sets, and the 3/2/1-source scenarios.

FID features come from a pluggable extractor. ``random-projection`` is a small
deterministic extractor for tests and desk-scale runs; ``inception-v3`` uses the
2048-d pool features of a pretrained Inception v3. Values from different
extractors are not comparable, so every report names its extractor.
"""
import itertools
import logging
from abc import ABC, abstractmethod
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from scipy import linalg

from sprite_imputer import config
from sprite_imputer.exceptions import ContractViolationError
from sprite_imputer.models.generator import Generator
from sprite_imputer.schemas.domain import ALL_DOMAINS, DomainId, other_domains
from sprite_imputer.schemas.metrics import MetricsCell, MetricsReport
from sprite_imputer.schemas.sprite import SpriteDataset
from sprite_imputer.services.batch_service import build_forward_input, collate, sheet_tensor

logger = logging.getLogger(__name__)

FRECHET_EPS = 1e-6


def l1_metric(generated: torch.Tensor, target: torch.Tensor, include_alpha: bool = True) -> float:
    """
    Mean absolute per-channel difference on the [0, 1] scale.

    Both sets are (N, C, H, W) tensors in the model range [-1, 1], paired by index.
    """
    if generated.shape != target.shape:
        message = f"l1_metric: set shapes differ {tuple(generated.shape)} vs {tuple(target.shape)}"
        logger.error(message)
        raise ContractViolationError(message)
    if generated.numel() == 0:
        raise ContractViolationError("l1_metric: empty image sets")
    if not include_alpha:
        generated, target = generated[:, :3], target[:, :3]
    diff = (generated.to(torch.float64) - target.to(torch.float64)).abs() / 2.0
    return float(diff.mean().item())


def composite_over_white(images: torch.Tensor) -> torch.Tensor:
    """(N, 4, H, W) RGBA in [-1, 1] -> (N, 3, H, W) RGB in [0, 1] over a white background."""
    rgba = (images.to(torch.float32) + 1.0) / 2.0
    rgb, alpha = rgba[:, :3], rgba[:, 3:4]
    return rgb * alpha + (1.0 - alpha)


def _symmetric_sqrt(matrix: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = linalg.eigh(matrix)
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    return (eigenvectors * np.sqrt(eigenvalues)) @ eigenvectors.T


def frechet_distance(mu1: np.ndarray, cov1: np.ndarray, mu2: np.ndarray, cov2: np.ndarray,
                     eps: float = FRECHET_EPS) -> float:
    """
    ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)).

    The trace of the product root is taken as Tr((S1^(1/2) S2 S1^(1/2))^(1/2)), which
    only needs symmetric eigendecompositions. Near-singular covariances get ``eps``
    added to the diagonal; tiny negative eigenvalues are clamped to zero.
    """
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=np.float64))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=np.float64))
    cov1 = np.atleast_2d(np.asarray(cov1, dtype=np.float64))
    cov2 = np.atleast_2d(np.asarray(cov2, dtype=np.float64))

    for name, cov, mu in (("cov1", cov1, mu1), ("cov2", cov2, mu2)):
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            message = f"frechet_distance: {name} must be square, got {cov.shape}"
            logger.error(message)
            raise ContractViolationError(message)
        if cov.shape[0] != mu.shape[0]:
            message = f"frechet_distance: {name} is {cov.shape} but the mean has {mu.shape[0]} entries"
            logger.error(message)
            raise ContractViolationError(message)
    if mu1.shape != mu2.shape:
        message = f"frechet_distance: mean dimensions differ {mu1.shape} vs {mu2.shape}"
        logger.error(message)
        raise ContractViolationError(message)

    cov1 = (cov1 + cov1.T) / 2.0
    cov2 = (cov2 + cov2.T) / 2.0
    if min(linalg.eigvalsh(cov1).min(), linalg.eigvalsh(cov2).min()) < eps:
        logger.debug(f"frechet_distance: near-singular covariance, adding {eps} to the diagonal")
        offset = np.eye(cov1.shape[0]) * eps
        cov1, cov2 = cov1 + offset, cov2 + offset

    root1 = _symmetric_sqrt(cov1)
    product = root1 @ cov2 @ root1
    product = (product + product.T) / 2.0
    tr_covmean = np.sqrt(np.clip(linalg.eigvalsh(product), 0.0, None)).sum()

    diff = mu1 - mu2
    distance = diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * tr_covmean
    return float(max(distance, 0.0))


class FeatureExtractor(ABC):
    """Deterministic map from RGB images in [0, 1] to fixed-length feature vectors."""
    name: str
    dimension: int
    input_size: int

    @abstractmethod
    def _features(self, images: torch.Tensor) -> torch.Tensor:
        ...

    def __call__(self, images: torch.Tensor) -> np.ndarray:
        if images.shape[-1] != self.input_size or images.shape[-2] != self.input_size:
            images = F.interpolate(images, size=(self.input_size, self.input_size),
                                   mode="bilinear", align_corners=False)
        with torch.no_grad():
            features = self._features(images)
        return features.detach().cpu().to(torch.float64).numpy()


class RandomProjectionExtractor(FeatureExtractor):
    """8x8 average-pooled RGB pixels projected by a fixed-seed Gaussian matrix (64-d)."""
    name = "random-projection"

    def __init__(self, dimension: int = 64, pooled_size: int = 8, input_size: int = 64, seed: int = 0):
        self.dimension = dimension
        self.pooled_size = pooled_size
        self.input_size = input_size
        inputs = 3 * pooled_size * pooled_size
        rng = np.random.default_rng(seed)
        self.projection = torch.from_numpy(rng.standard_normal((inputs, dimension)) / np.sqrt(inputs))

    def _features(self, images: torch.Tensor) -> torch.Tensor:
        pooled = F.adaptive_avg_pool2d(images.to(torch.float64), self.pooled_size)
        return pooled.flatten(1) @ self.projection


class InceptionExtractor(FeatureExtractor):
    """Inception v3 pool features (2048-d) at 299x299 bilinear input."""
    name = "inception-v3"
    dimension = 2048
    input_size = 299

    IMAGENET_MEAN = (0.485, 0.456, 0.406)
    IMAGENET_STD = (0.229, 0.224, 0.225)

    def __init__(self, weights_path: Optional[str] = None, device: str = "cpu"):
        # torchvision is only needed for this extractor
        from torchvision.models import Inception_V3_Weights, inception_v3

        self.device = torch.device(device)
        weights_path = weights_path or config.EXTRACTOR_WEIGHTS
        if weights_path:
            logger.info(f"Loading Inception v3 weights from {weights_path}")
            model = inception_v3(weights=None, aux_logits=True, init_weights=False)
            model.load_state_dict(torch.load(weights_path, map_location="cpu", weights_only=True))
        else:
            logger.info("Loading torchvision's pretrained Inception v3 weights")
            model = inception_v3(weights=Inception_V3_Weights.IMAGENET1K_V1)
        model.fc = torch.nn.Identity()
        self.model = model.eval().to(self.device)
        self.mean = torch.tensor(self.IMAGENET_MEAN).view(1, 3, 1, 1)
        self.std = torch.tensor(self.IMAGENET_STD).view(1, 3, 1, 1)

    def _features(self, images: torch.Tensor) -> torch.Tensor:
        normalized = (images.to(torch.float32) - self.mean) / self.std
        return self.model(normalized.to(self.device))


EXTRACTORS: Dict[str, Callable[..., FeatureExtractor]] = {
    RandomProjectionExtractor.name: RandomProjectionExtractor,
    InceptionExtractor.name: InceptionExtractor,
}


def get_extractor(name: str, **kwargs) -> FeatureExtractor:
    if name not in EXTRACTORS:
        message = f"Unknown feature extractor '{name}'. Available: {sorted(EXTRACTORS)}"
        logger.error(message)
        raise ContractViolationError(message)
    return EXTRACTORS[name](**kwargs)


def extract_features(images: torch.Tensor, extractor: FeatureExtractor, batch_size: int = 64) -> np.ndarray:
    """RGBA model-range images -> (N, d) features, composited over white first."""
    chunks = [extractor(composite_over_white(images[i:i + batch_size]))
              for i in range(0, images.shape[0], batch_size)]
    return np.concatenate(chunks, axis=0)


def feature_statistics(features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Sample mean and unbiased (n - 1) covariance."""
    if features.shape[0] < 2:
        message = f"At least 2 images are needed to estimate a covariance, got {features.shape[0]}"
        logger.error(message)
        raise ContractViolationError(message)
    if features.shape[0] < features.shape[1]:
        logger.warning(f"FID set of {features.shape[0]} images is smaller than the feature dimension "
                       f"{features.shape[1]}; the covariance is rank deficient")
    return features.mean(axis=0), np.cov(features, rowvar=False, ddof=1)


def fid(set_a: torch.Tensor, set_b: torch.Tensor, extractor: FeatureExtractor, batch_size: int = 64) -> float:
    """Fréchet distance between feature Gaussians of two RGBA image sets."""
    if set_a.shape[0] == 0 or set_b.shape[0] == 0:
        message = "fid: image sets must not be empty"
        logger.error(message)
        raise ContractViolationError(message)
    mu_a, cov_a = feature_statistics(extract_features(set_a, extractor, batch_size))
    mu_b, cov_b = feature_statistics(extract_features(set_b, extractor, batch_size))
    return frechet_distance(mu_a, cov_a, mu_b, cov_b)


def generate_for_subset(generator: Generator, sheets: torch.Tensor, target: DomainId,
                        sources: Sequence[DomainId], batch_size: int = 64) -> torch.Tensor:
    """Generate ``target`` for every sheet from ``sources`` only, other slots zero-filled."""
    dropped = set(other_domains(target)) - set(sources)
    device = next(generator.parameters()).device
    outputs = []
    with torch.no_grad():
        for start in range(0, sheets.shape[0], batch_size):
            pairs = [build_forward_input(sheet, target, dropped) for sheet in sheets[start:start + batch_size]]
            source_tensor, labels = collate(pairs)
            outputs.append(generator(source_tensor.to(device), labels.to(device)).cpu())
    return torch.cat(outputs)


def evaluate_scenarios(generator: Generator, test_set: SpriteDataset, sources_available: int,
                       extractor: Optional[FeatureExtractor] = None, compute_fid: bool = True,
                       batch_size: int = 64, include_alpha: bool = True,
                       checkpoint: Optional[str] = None) -> MetricsReport:
    """
    Every (target, source subset of the given size) cell, then per-target and overall averages.

    3 sources -> 4 cells, 2 -> 12 cells, 1 -> 12 cells.
    """
    if sources_available not in (1, 2, 3):
        message = f"sources_available must be 1, 2 or 3, got {sources_available}"
        logger.error(message)
        raise ContractViolationError(message)
    if len(test_set) == 0:
        message = "Cannot evaluate on an empty test set"
        logger.error(message)
        raise ContractViolationError(message)
    if compute_fid and extractor is None:
        extractor = RandomProjectionExtractor()

    sheets = torch.stack([sheet_tensor(sheet) for sheet in test_set.sheets])
    was_training = generator.training
    generator.eval()
    cells: List[MetricsCell] = []
    try:
        for target in ALL_DOMAINS:
            real = sheets[:, int(target)]
            for subset in itertools.combinations(other_domains(target), sources_available):
                generated = generate_for_subset(generator, sheets, target, subset, batch_size)
                cell_fid = fid(generated, real, extractor, batch_size) if compute_fid else None
                cells.append(MetricsCell(target=target, sources=subset,
                                         l1=l1_metric(generated, real, include_alpha), fid=cell_fid))
    finally:
        generator.train(was_training)

    report = MetricsReport(
        sources_available=sources_available,
        extractor=extractor.name if compute_fid else None,
        extractor_dimension=extractor.dimension if compute_fid else None,
        dataset=test_set.name,
        dataset_size=len(test_set),
        checkpoint=checkpoint,
        cells=cells,
    )
    logger.info(f"{sources_available}-source evaluation: L1 {report.average_l1:.5f}"
                + (f", FID {report.average_fid:.4f}" if report.average_fid is not None else ""))
    return report


def evaluate_all_scenarios(generator: Generator, test_set: SpriteDataset, **kwargs) -> List[MetricsReport]:
    return [evaluate_scenarios(generator, test_set, sources, **kwargs) for sources in (3, 2, 1)]


def self_fid(dataset: SpriteDataset, extractor: FeatureExtractor, pose: Union[DomainId, None] = None,
             batch_size: int = 64) -> float:
    """FID of a dataset's sprites against themselves; ~0 for a sane extractor."""
    sheets = torch.stack([sheet_tensor(sheet) for sheet in dataset.sheets])
    images = sheets[:, int(pose)] if pose is not None else sheets.flatten(0, 1)
    return fid(images, images, extractor, batch_size)
