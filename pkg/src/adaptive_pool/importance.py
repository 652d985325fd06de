"""Importance maps and the grids they induce.

A map assigns each pixel a weight in ``[0, 1]``. Grid borders are placed so
that every cell column (and row) carries the same share of the map's mass,
which packs small cells into heavily weighted regions.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import PoolGrid, SizingError, discretize
from .pooling import as_image, pool_forward

__all__ = [
    "Roi",
    "RoiSpec",
    "build_map",
    "grid_from_importance",
    "compress",
    "load_roi_spec",
    "roi_spec_from_json",
    "roi_spec_to_json",
]


@dataclass(frozen=True)
class Roi:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1 or self.x < 0 or self.y < 0:
            raise ValueError(f"invalid rectangle {self}")


@dataclass(frozen=True)
class RoiSpec:
    """Core rectangles (weight 1) surrounded by a ring of weight ``ring_value``.

    ``ring_px=None`` gives each rectangle a ring 10% of its longer side
    (at least one pixel).
    """

    rois: tuple[Roi, ...] = field(default_factory=tuple)
    ring_px: int | None = None
    ring_value: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "rois", tuple(r if isinstance(r, Roi) else Roi(**r) for r in self.rois))
        if not 0.0 < self.ring_value < 1.0:
            raise ValueError(f"ring_value must lie strictly between 0 and 1, got {self.ring_value}")
        if self.ring_px is not None and self.ring_px < 0:
            raise ValueError("ring_px must be non-negative")

    def ring_for(self, roi: Roi) -> int:
        if self.ring_px is not None:
            return self.ring_px
        return max(1, round(0.1 * max(roi.w, roi.h)))


def build_map(spec: RoiSpec, width: int, height: int) -> np.ndarray:
    """Render ``spec`` as a ``(height, width)`` weight map.

    Ring pixels are those within ``ring`` pixels (chessboard distance) of a
    core rectangle. Overlaps take the larger weight.
    """
    weights = np.zeros((height, width), dtype=np.float64)
    for roi in spec.rois:
        if roi.x + roi.w > width or roi.y + roi.h > height:
            raise ValueError(f"{roi} does not fit in a {width}x{height} image")
        ring = spec.ring_for(roi)
        y0, y1 = max(roi.y - ring, 0), min(roi.y + roi.h + ring, height)
        x0, x1 = max(roi.x - ring, 0), min(roi.x + roi.w + ring, width)
        np.maximum(weights[y0:y1, x0:x1], spec.ring_value, out=weights[y0:y1, x0:x1])
        weights[roi.y:roi.y + roi.h, roi.x:roi.x + roi.w] = 1.0
    return weights


def _check_map(importance) -> np.ndarray:
    m = np.asarray(importance, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"importance map must be 2-D, got shape {m.shape}")
    if m.size and (m.min() < 0.0 or m.max() > 1.0):
        raise ValueError("importance weights must lie in [0, 1]")
    return m


def _equal_mass_borders(marginal: np.ndarray, k: int) -> list[float]:
    # borders are scale free; normalizing keeps tiny (subnormal) masses finite
    marginal = marginal / marginal.max()
    # pixel c spreads its mass evenly over [c, c + 1]
    cumulative = np.concatenate([[0.0], np.cumsum(marginal)])
    positions = np.arange(cumulative.size, dtype=np.float64)
    targets = np.arange(k + 1) * (cumulative[-1] / k)
    borders = np.interp(targets, cumulative, positions)
    # drop interpolation noise so exact half-pixel ties round consistently
    borders = np.round(borders, 9)
    borders[0], borders[-1] = 0.0, float(marginal.size)
    return borders.tolist()


def grid_from_importance(importance, k_cols: int, k_rows: int | None = None,
                         floor: float | None = None) -> PoolGrid:
    """Grid whose cell columns and rows each hold equal importance mass.

    ``floor`` is added to every column and row marginal so that empty
    regions still receive cells; the default is ``1e-6`` times the mean
    marginal (or 1 for an all-zero map).
    """
    m = _check_map(importance)
    if k_rows is None:
        k_rows = k_cols
    height, width = m.shape
    if k_cols < 1 or k_rows < 1 or k_cols > width or k_rows > height:
        raise SizingError(f"cannot split a {width}x{height} map into {k_cols}x{k_rows} cells")
    col_marginal = m.sum(axis=0)
    row_marginal = m.sum(axis=1)
    if floor is None:
        col_floor = 1e-6 * col_marginal.mean() or 1.0
        row_floor = 1e-6 * row_marginal.mean() or 1.0
    else:
        if not floor > 0.0:
            raise ValueError(f"floor must be positive, got {floor}")
        col_floor = row_floor = floor
    grid = PoolGrid(
        width,
        height,
        _equal_mass_borders(col_marginal + col_floor, k_cols),
        _equal_mass_borders(row_marginal + row_floor, k_rows),
    )
    return discretize(grid)


def compress(image, importance, k_cols: int, k_rows: int | None = None,
             floor: float | None = None) -> tuple[np.ndarray, PoolGrid]:
    """Downsample ``image`` on the grid induced by ``importance``."""
    x = as_image(image)
    m = _check_map(importance)
    if m.shape != x.shape[:2]:
        raise ValueError(f"importance map is {m.shape}, image is {x.shape[:2]}")
    grid = grid_from_importance(m, k_cols, k_rows, floor)
    return pool_forward(image, grid), grid


def roi_spec_from_json(text: str) -> RoiSpec:
    doc = json.loads(text)
    return RoiSpec(
        rois=tuple(Roi(**{k: int(r[k]) for k in ("x", "y", "w", "h")}) for r in doc.get("rois", [])),
        ring_px=doc.get("ring_px"),
        ring_value=doc.get("ring_value", 0.5),
    )


def roi_spec_to_json(spec: RoiSpec) -> str:
    doc = {
        "rois": [{"x": r.x, "y": r.y, "w": r.w, "h": r.h} for r in spec.rois],
        "ring_px": spec.ring_px,
        "ring_value": spec.ring_value,
    }
    return json.dumps(doc)


def load_roi_spec(path) -> RoiSpec:
    with open(path) as fh:
        return roi_spec_from_json(fh.read())


def mean_cell_area(grid: PoolGrid, mask: np.ndarray) -> tuple[float, float]:
    """Mean area of cells that intersect ``mask`` and of those that do not."""
    heights, widths = grid.cell_sizes()
    re, ce = grid.row_edges(), grid.col_edges()
    inside, outside = [], []
    for i in range(grid.k_rows):
        for j in range(grid.k_cols):
            area = heights[i] * widths[j]
            hit = mask[re[i]:re[i + 1], ce[j]:ce[j + 1]].any()
            (inside if hit else outside).append(area)
    return (float(np.mean(inside)) if inside else math.nan,
            float(np.mean(outside)) if outside else math.nan)
