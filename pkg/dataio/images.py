# dataio/images.py
"""Image IO through Pillow: semantic label images, depth maps, RGB, and PNG renders of grids."""
from io import BytesIO
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union
import logging
import numpy as np
from PIL import Image

from models.grid import CLASS_ORDER, ConfidenceGrid, LabelGrid
from models.manifest import DEFAULT_PALETTE
from utils.errors import IoError, ParseError, ShapeMismatch
from utils.files import write_atomic

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
DEPTH_SCALE = 256.0


def _open(path: PathLike) -> Image.Image:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}")
    try:
        with Image.open(BytesIO(data)) as img:
            img.load()
            return img
    except (OSError, SyntaxError, ValueError) as e:
        raise ParseError(f"{path}: not a readable image ({e})")


def _png_bytes(img: Image.Image) -> bytes:
    buffer = BytesIO()
    img.save(buffer, format="PNG")
    return buffer.getvalue()


def read_semantic_image(path: PathLike, shape: Optional[Tuple[int, int]] = None) -> np.ndarray:
    img = _open(path)
    if img.mode not in ("L", "P"):
        raise ParseError(f"{path}: semantic image must be 8-bit single channel, got mode {img.mode}")
    labels = np.array(img, dtype=np.uint8)
    if shape is not None and labels.shape != tuple(shape):
        raise ShapeMismatch(f"{path}: image {labels.shape} does not match camera {tuple(shape)}")
    return labels


def write_semantic_image(path: PathLike, labels: np.ndarray) -> Path:
    return write_atomic(path, _png_bytes(Image.fromarray(np.asarray(labels, dtype=np.uint8), mode="L")))


def read_depth(path: PathLike) -> np.ndarray:
    """Depth in meters: .npy arrays as stored, 16-bit PNG divided by 256 (0 = no depth)."""
    if str(path).endswith(".npy"):
        try:
            return np.load(path).astype(np.float64)
        except OSError as e:
            raise IoError(f"cannot read {path}: {e}")
        except ValueError as e:
            raise ParseError(f"{path}: not a depth array ({e})")
    img = _open(path)
    return np.asarray(img, dtype=np.float64) / DEPTH_SCALE


def write_depth(path: PathLike, depth: np.ndarray) -> Path:
    scaled = np.clip(np.round(np.nan_to_num(depth, nan=0.0) * DEPTH_SCALE), 0, np.iinfo(np.uint16).max)
    return write_atomic(path, _png_bytes(Image.fromarray(scaled.astype(np.uint16))))


def read_rgb(path: PathLike) -> np.ndarray:
    return np.array(_open(path).convert("RGB"), dtype=np.uint8)


def _palette_table(palette: Optional[Dict[str, Sequence[int]]]) -> np.ndarray:
    palette = {**DEFAULT_PALETTE, **(palette or {})}
    return np.array([palette[c.value] for c in CLASS_ORDER], dtype=np.uint8)


def render_grid(grid: Union[LabelGrid, ConfidenceGrid], palette: Optional[Dict[str, Sequence[int]]] = None, channel: Optional[str] = None) -> Image.Image:
    """Class colors for label grids, grayscale for confidences (max over non-free channels by default)."""
    if isinstance(grid, LabelGrid):
        return Image.fromarray(_palette_table(palette)[grid.class_layer], mode="RGB")
    if channel is not None:
        values = grid.channel(channel)
    else:
        picked = [p for name, p in zip(grid.channels, grid.probs) if name != "free"] or list(grid.probs)
        values = np.max(np.stack(picked), axis=0)
    return Image.fromarray(np.round(values * 255.0).astype(np.uint8), mode="L")


def export_png(grid: Union[LabelGrid, ConfidenceGrid], path: PathLike, palette: Optional[Dict[str, Sequence[int]]] = None, channel: Optional[str] = None) -> Path:
    try:
        return write_atomic(path, _png_bytes(render_grid(grid, palette, channel)))
    except (KeyError, ValueError) as e:
        raise IoError(f"cannot render {path}: {e}")
