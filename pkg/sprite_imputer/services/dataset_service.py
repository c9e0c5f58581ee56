"""
Dataset loading, normalization, splitting, augmentation and manifests.

On-disk layout: ``<root>/<character-id>/<pose>.png`` with pose in
back/left/front/right (see docs/dataset_layout.md).
"""
import logging
import math
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv

from sprite_imputer.exceptions import ContractViolationError, DatasetError, ImageTooLargeError
from sprite_imputer.schemas.domain import ALL_DOMAINS, DomainId
from sprite_imputer.schemas.sprite import SPRITE_SIZE, CharacterSheet, Sprite, SpriteDataset
from sprite_imputer.schemas.training import DataConfig
from sprite_imputer.services.file_service import FileService

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# pose -> file name inside a character directory
POSE_FILENAMES: Dict[DomainId, str] = {d: f"{d.pose_name}.png" for d in ALL_DOMAINS}

MANIFEST_HEADER = "# sprite_imputer dataset manifest v1"
MANIFEST_NAME = "manifest.txt"


def detect_background_key(rgb: np.ndarray) -> Tuple[int, ...]:
    """Most frequent corner color; ties go to the first corner in TL, TR, BL, BR order."""
    corners = [rgb[0, 0], rgb[0, -1], rgb[-1, 0], rgb[-1, -1]]
    counts = Counter(tuple(int(c) for c in corner) for corner in corners)
    return counts.most_common(1)[0][0]


def pad_and_alpha(image: np.ndarray) -> Sprite:
    """
    Center an image of at most 64x64 on a transparent canvas.

    RGB input gets an alpha channel: opaque wherever the pixel differs from the
    background key color, transparent where it equals it.

    Raises:
        ImageTooLargeError: either side exceeds 64 (images are never downscaled)
        ContractViolationError: not an (H, W, 3|4) uint8 array
    """
    array = np.asarray(image)
    if array.ndim != 3 or array.shape[2] not in (3, 4) or array.dtype != np.uint8:
        message = f"Expected uint8 (H, W, 3|4) image, got {array.dtype} {array.shape}"
        logger.error(message)
        raise ContractViolationError(message)

    height, width = array.shape[:2]
    if height > SPRITE_SIZE or width > SPRITE_SIZE:
        message = f"Image of {width}x{height} exceeds the {SPRITE_SIZE}x{SPRITE_SIZE} canvas"
        logger.error(message)
        raise ImageTooLargeError(message)

    if array.shape[2] == 3:
        key = np.array(detect_background_key(array), dtype=np.uint8)
        alpha = np.where(np.all(array == key, axis=2), 0, 255).astype(np.uint8)
        array = np.concatenate([array, alpha[..., None]], axis=2)

    canvas = np.zeros((SPRITE_SIZE, SPRITE_SIZE, 4), dtype=np.uint8)
    top = (SPRITE_SIZE - height) // 2
    left = (SPRITE_SIZE - width) // 2
    canvas[top:top + height, left:left + width] = array
    return Sprite(pixels=canvas)


def hue_rotate_pixels(pixels: np.ndarray, angle: float) -> np.ndarray:
    """Rotate the hue of uint8 RGBA pixels of any leading shape; alpha is copied unchanged."""
    shift = (float(angle) % 360.0) / 360.0
    out = np.array(pixels, dtype=np.uint8, copy=True)
    if shift == 0.0:
        return out
    hsv = rgb_to_hsv(out[..., :3].astype(np.float64) / 255.0)
    hsv[..., 0] = (hsv[..., 0] + shift) % 1.0
    rgb = hsv_to_rgb(hsv)
    out[..., :3] = np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)
    return out


def hue_rotate(sheet: CharacterSheet, angle: float) -> CharacterSheet:
    """Apply the same hue shift to all four poses of a character."""
    return CharacterSheet.from_stacked(sheet.id, hue_rotate_pixels(sheet.stacked(), angle))


def split(dataset: SpriteDataset, ratio: float, seed: int) -> Tuple[SpriteDataset, SpriteDataset]:
    """
    Seeded shuffle, then the first floor(ratio * n) sheets form the train split.

    Example: 14,202 sheets at 0.85 give 12,071 train / 2,131 test.
    """
    if not 0.0 < ratio <= 1.0:
        message = f"Split ratio must be in (0, 1], got {ratio}"
        logger.error(message)
        raise ContractViolationError(message)

    total = len(dataset)
    train_size = math.floor(ratio * total + 1e-9)
    order = np.random.default_rng(seed).permutation(total)
    train = dataset.subset(order[:train_size].tolist(), split_tag="train")
    test = dataset.subset(order[train_size:].tolist(), split_tag="test")
    logger.info(f"Split {total} sheets into {len(train)} train / {len(test)} test (seed {seed})")
    return train, test


class DatasetService:
    """Reads and writes datasets in the on-disk layout."""

    def __init__(self, file_service: Optional[FileService] = None):
        self.file_service = file_service or FileService()

    def load_dataset(self, root: PathLike, layout: Optional[Mapping[DomainId, str]] = None,
                     name: Optional[str] = None) -> SpriteDataset:
        """
        Load every complete character under ``root``.

        Characters missing any pose file are skipped with a warning.

        Raises:
            DatasetError: root does not exist
            ImageReadError: an existing pose file cannot be decoded
        """
        root_path = Path(root)
        layout = layout or POSE_FILENAMES
        if not root_path.is_dir():
            message = f"Dataset directory not found: {root_path}"
            logger.error(message)
            raise DatasetError(message)

        sheets: List[CharacterSheet] = []
        for character_dir in sorted(p for p in root_path.iterdir() if p.is_dir()):
            paths = {d: character_dir / layout[d] for d in ALL_DOMAINS}
            missing = [d.pose_name for d, p in paths.items() if not p.is_file()]
            if missing:
                logger.warning(f"Skipping character '{character_dir.name}': missing poses {missing}")
                continue
            sprites = {d: pad_and_alpha(self.file_service.read_png(p)) for d, p in paths.items()}
            sheets.append(CharacterSheet(id=character_dir.name, sprites=sprites))

        logger.info(f"Loaded {len(sheets)} characters from {root_path}")
        return SpriteDataset(sheets=tuple(sheets), name=name or root_path.name)

    def save_dataset(self, dataset: SpriteDataset, root: PathLike,
                     layout: Optional[Mapping[DomainId, str]] = None) -> Path:
        root_path = Path(root)
        layout = layout or POSE_FILENAMES
        root_path.mkdir(parents=True, exist_ok=True)
        for sheet in dataset.sheets:
            for domain in ALL_DOMAINS:
                self.file_service.write_png(sheet.sprites[domain].pixels, root_path / sheet.id / layout[domain])
        return root_path


def write_manifest(entries: Iterable[Tuple[str, str]], path: PathLike) -> Path:
    """Write ``id<TAB>split`` lines under a versioned header."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    lines = [MANIFEST_HEADER, "# id\tsplit"]
    lines.extend(f"{sheet_id}\t{split_tag}" for sheet_id, split_tag in entries)
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return target


def read_manifest(path: PathLike) -> Dict[str, str]:
    source = Path(path)
    if not source.is_file():
        message = f"Dataset manifest not found: {source}"
        logger.error(message)
        raise DatasetError(message)

    membership: Dict[str, str] = {}
    for number, line in enumerate(source.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            message = f"Malformed manifest line {number} in {source}: {line!r}"
            logger.error(message)
            raise DatasetError(message)
        membership[parts[0]] = parts[1]
    return membership


def split_by_manifest(dataset: SpriteDataset, membership: Mapping[str, str]) -> Tuple[SpriteDataset, SpriteDataset]:
    """Partition a dataset by recorded split membership; unlisted ids are ignored with a warning."""
    train_idx, test_idx = [], []
    for index, sheet in enumerate(dataset.sheets):
        tag = membership.get(sheet.id)
        if tag == "train":
            train_idx.append(index)
        elif tag == "test":
            test_idx.append(index)
        else:
            logger.warning(f"Character '{sheet.id}' has no train/test entry in the manifest")
    return dataset.subset(train_idx, split_tag="train"), dataset.subset(test_idx, split_tag="test")


def load_splits(data: DataConfig, service: Optional[DatasetService] = None) -> Tuple[SpriteDataset, SpriteDataset]:
    """
    Train and test sets for a run.

    Order of precedence: a separate ``test_root``; an explicit manifest; the
    ``manifest.txt`` inside ``root``; a seeded split of ``root``.
    """
    service = service or DatasetService()
    dataset = service.load_dataset(data.root)
    if data.test_root is not None:
        train = dataset.subset(range(len(dataset)), split_tag="train")
        test = service.load_dataset(data.test_root)
        test = test.subset(range(len(test)), split_tag="test")
    else:
        manifest_path = data.manifest or Path(data.root) / MANIFEST_NAME
        if manifest_path.is_file():
            train, test = split_by_manifest(dataset, read_manifest(manifest_path))
        else:
            train, test = split(dataset, data.split_ratio, data.split_seed)
    if data.max_train is not None and len(train) > data.max_train:
        train = train.subset(range(data.max_train), split_tag="train")
    if data.max_test is not None and len(test) > data.max_test:
        test = test.subset(range(data.max_test), split_tag="test")
    return train, test
