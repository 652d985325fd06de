"""Image files, grid rendering and a synthetic face-like test image."""
from __future__ import annotations

import os

import numpy as np
from PIL import Image as PILImage

from .grid import PoolGrid
from .importance import Roi, RoiSpec

__all__ = [
    "ImageFormatError",
    "load_image",
    "save_image",
    "load_importance_map",
    "render_grid",
    "upscale",
    "face_image",
]

_MODES = {"L": 1, "RGB": 3}


class ImageFormatError(ValueError):
    pass


def load_image(path) -> np.ndarray:
    """Read an 8-bit grayscale or RGB file as floats in ``[0, 1]``.

    Grayscale files give ``(H, W)`` arrays, RGB files ``(H, W, 3)``.
    """
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode not in _MODES:
                raise ImageFormatError(
                    f"{os.fspath(path)}: unsupported pixel format {mode!r} (need 8-bit L or RGB)"
                )
            data = np.asarray(im, dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise ImageFormatError(f"{os.fspath(path)}: cannot read image ({exc})") from None
    return data.astype(np.float64) / 255.0


def to_uint8(image) -> np.ndarray:
    x = np.asarray(image, dtype=np.float64)
    return np.clip(np.floor(x * 255.0 + 0.5), 0, 255).astype(np.uint8)


def save_image(image, path) -> None:
    """Write ``image`` (values in ``[0, 1]``) as 8-bit; format follows the suffix.

    ``.pgm`` files are written as binary P5 graymaps and must be single channel.
    """
    data = to_uint8(image)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    if data.ndim == 2:
        mode = "L"
    elif data.ndim == 3 and data.shape[2] == 3:
        mode = "RGB"
    else:
        raise ImageFormatError(f"cannot save an image of shape {data.shape}")
    suffix = os.path.splitext(os.fspath(path))[1].lower()
    if suffix == ".pgm" and mode != "L":
        raise ImageFormatError("PGM output needs a single-channel image")
    PILImage.fromarray(data).save(path)


def load_importance_map(path) -> np.ndarray:
    """Grayscale file as importance weights (intensity / 255)."""
    m = load_image(path)
    if m.ndim == 3:
        raise ImageFormatError(f"{os.fspath(path)}: importance map must be grayscale")
    return m


def render_grid(grid: PoolGrid) -> np.ndarray:
    """Full-resolution map of cell size: small cells white, large cells black.

    Every pixel gets ``1 - (area - min_area) / (max_area - min_area)`` for the
    cell that contains it; grids whose cells all have one area render as 0.5.
    """
    heights, widths = grid.cell_sizes()
    areas = grid.cell_areas().astype(np.float64)
    lo, hi = areas.min(), areas.max()
    if hi == lo:
        return np.full((grid.height, grid.width), 0.5)
    shade = 1.0 - (areas - lo) / (hi - lo)
    return np.repeat(np.repeat(shade, heights, axis=0), widths, axis=1)


def upscale(pooled, grid: PoolGrid) -> np.ndarray:
    """Paint each pooled value back over its cell at source resolution."""
    heights, widths = grid.cell_sizes()
    return np.repeat(np.repeat(np.asarray(pooled), heights, axis=0), widths, axis=1)


def face_image(size: int = 112, seed: int = 0) -> tuple[np.ndarray, RoiSpec]:
    """A face-like grayscale test image and eye rectangles for it.

    Returns the image (values in ``[0, 1]``) and a :class:`RoiSpec` with one
    rectangle per eye.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.full((size, size), 0.15)
    face = ((xx - 0.5) / 0.36) ** 2 + ((yy - 0.52) / 0.46) ** 2 <= 1.0
    img[face] = 0.7 - 0.15 * yy[face]
    eye_w, eye_h = round(0.2 * size), round(0.1 * size)
    eye_y = round(0.36 * size)
    rois = []
    for cx in (0.33, 0.67):
        x0 = round(cx * size) - eye_w // 2
        rois.append(Roi(x0, eye_y, eye_w, eye_h))
        ex = (xx - cx) / 0.08
        ey = (yy - (eye_y + eye_h / 2) / size) / 0.035
        img[ex ** 2 + ey ** 2 <= 1.0] = 0.95
        img[(ex / 0.45) ** 2 + (ey / 0.9) ** 2 <= 1.0] = 0.05
    mouth = (np.abs(yy - 0.76) < 0.025) & (np.abs(xx - 0.5) < 0.14)
    img[mouth] = 0.3
    nose = (np.abs(xx - 0.5) < 0.02) & (yy > 0.45) & (yy < 0.64)
    img[nose] = 0.45
    img += rng.normal(0.0, 0.02, img.shape)
    return np.clip(img, 0.0, 1.0), RoiSpec(rois=tuple(rois))
