"""PNG input/output and comparison-grid rendering."""
import io
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from sprite_imputer.exceptions import ContractViolationError, ImageReadError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class FileService:
    """Reads and writes sprite rasters as 8-bit PNG."""

    ALLOWED_IMAGE_TYPES = {
        'image/png': '.png',
    }

    MAX_IMAGE_SIZE = 4 * 1024 * 1024  # 4MB, far above any 64x64 sprite

    # Grid rendering
    GRID_SCALE = 4
    GRID_GAP = 4
    GRID_BACKGROUND = (255, 255, 255, 255)

    def __init__(self):
        # Lazy load python-magic; PIL verification still runs without it
        self._magic = None
        self._magic_checked = False

    def _get_magic(self):
        if not self._magic_checked:
            self._magic_checked = True
            try:
                import magic
                self._magic = magic
            except ImportError as e:
                logger.warning(f"python-magic unavailable, MIME sniffing disabled: {e}")
        return self._magic

    def validate_image_bytes(self, content: bytes) -> Tuple[bool, str]:
        """
        Validate size, MIME type and decodability of an image file.

        Args:
            content: raw file bytes

        Returns:
            Tuple of (is_valid, error_message)
        """
        if len(content) > self.MAX_IMAGE_SIZE:
            return False, f"File size ({len(content)} bytes) exceeds maximum allowed size ({self.MAX_IMAGE_SIZE} bytes)"

        magic = self._get_magic()
        if magic is not None:
            mime_type = magic.from_buffer(content, mime=True)
            if mime_type not in self.ALLOWED_IMAGE_TYPES:
                return False, f"Invalid image type: {mime_type}. Allowed: {list(self.ALLOWED_IMAGE_TYPES.keys())}"

        try:
            from PIL import Image
            image = Image.open(io.BytesIO(content))
            if image.format != "PNG":
                return False, f"Invalid image format: {image.format}. Expected PNG"
            image.verify()
        except Exception as e:
            return False, f"Invalid image file: {str(e)}"
        return True, "File validation successful"

    def read_png(self, path: PathLike) -> np.ndarray:
        """
        Read a PNG as uint8 (H, W, 3) or (H, W, 4).

        Palette and grayscale modes are expanded; palette transparency becomes alpha.

        Raises:
            ImageReadError: unreadable or non-PNG file, with the file path in the message
        """
        from PIL import Image

        file_path = Path(path)
        try:
            content = file_path.read_bytes()
        except OSError as e:
            message = f"Cannot read image {file_path}: {e}"
            logger.error(message)
            raise ImageReadError(message) from e

        is_valid, error_message = self.validate_image_bytes(content)
        if not is_valid:
            message = f"Cannot read image {file_path}: {error_message}"
            logger.error(message)
            raise ImageReadError(message)

        with Image.open(io.BytesIO(content)) as image:
            if image.mode == "P":
                image = image.convert("RGBA" if "transparency" in image.info else "RGB")
            elif image.mode == "LA":
                image = image.convert("RGBA")
            elif image.mode not in ("RGB", "RGBA"):
                image = image.convert("RGB")
            return np.array(image, dtype=np.uint8)

    def write_png(self, pixels: np.ndarray, path: PathLike) -> Path:
        from PIL import Image

        array = np.asarray(pixels)
        if array.dtype != np.uint8 or array.ndim != 3 or array.shape[2] not in (3, 4):
            raise ContractViolationError(f"Expected uint8 (H, W, 3|4) pixels, got {array.dtype} {array.shape}")
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(array).save(target, format="PNG")
        return target

    def render_grid(self, columns: Sequence[Sequence[Optional[np.ndarray]]],
                    scale: Optional[int] = None) -> np.ndarray:
        """
        Lay out groups of sprites left to right, nearest-neighbour upscaled.

        Each column group is a list of sprites drawn side by side; groups are separated
        by a double gap. None entries are skipped.
        """
        from PIL import Image

        scale = scale or self.GRID_SCALE
        gap = self.GRID_GAP
        groups: List[List[np.ndarray]] = [[s for s in group if s is not None] for group in columns]
        groups = [g for g in groups if g]
        if not groups:
            raise ContractViolationError("Grid needs at least one sprite")

        height, width = groups[0][0].shape[:2]
        cell_w, cell_h = width * scale, height * scale
        count = sum(len(g) for g in groups)
        canvas_w = count * cell_w + (count + 1) * gap + (len(groups) - 1) * gap
        canvas = Image.new("RGBA", (canvas_w, cell_h + 2 * gap), self.GRID_BACKGROUND)

        x = gap
        for group in groups:
            for sprite in group:
                tile = Image.fromarray(np.ascontiguousarray(sprite, dtype=np.uint8))
                tile = tile.resize((cell_w, cell_h), Image.Resampling.NEAREST)
                canvas.alpha_composite(tile, (x, gap))
                x += cell_w + gap
            x += gap
        return np.array(canvas, dtype=np.uint8)

    def write_grid(self, columns: Sequence[Sequence[Optional[np.ndarray]]], path: PathLike,
                   scale: Optional[int] = None) -> Path:
        return self.write_png(self.render_grid(columns, scale), path)
