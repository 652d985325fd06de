"""Non-uniform pooling grids.

A grid is two monotone lists of border positions, one per axis. Border
positions are real-valued while a predictor is moving them; pooling uses
the half-up rounded positions, so cell ``i`` along an axis covers pixels
``round(b[i]) <= c < round(b[i + 1])``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "SizingError",
    "PoolGrid",
    "OffsetVector",
    "ClampReport",
    "round_half_up",
    "uniform_grid",
    "apply_offsets",
    "discretize",
    "grid_to_json",
    "grid_from_json",
]


class SizingError(ValueError):
    """Raised when an image extent cannot hold the requested number of cells."""


def round_half_up(x):
    """Round half-up, elementwise for arrays, to ``int`` for scalars."""
    if np.isscalar(x):
        return int(math.floor(x + 0.5))
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.intp)


def _as_borders(values: Sequence[float], extent: int, axis: str) -> tuple[float, ...]:
    borders = tuple(map(float, values))
    if len(borders) < 2:
        raise ValueError(f"{axis} borders need at least 2 entries, got {len(borders)}")
    if borders[0] != 0.0 or borders[-1] != float(extent):
        raise ValueError(
            f"{axis} borders must start at 0 and end at {extent}, got {borders[0]}..{borders[-1]}"
        )
    prev = 0.0
    for b in borders:
        # nan fails every comparison, so it is caught here too
        if not prev <= b <= extent:
            if math.isnan(b):
                raise ValueError(f"{axis} borders must be finite")
            raise ValueError(f"{axis} borders must be ascending: {borders}")
        prev = b
    return borders


def _min_gap(borders: tuple[float, ...]) -> int:
    edges = [math.floor(b + 0.5) for b in borders]
    return min(b - a for a, b in zip(edges, edges[1:]))


@dataclass(frozen=True)
class PoolGrid:
    """Border positions partitioning a ``height x width`` image into cells.

    ``cols`` holds ``k_cols + 1`` positions in ``[0, width]`` and ``rows``
    holds ``k_rows + 1`` positions in ``[0, height]``. The outer borders are
    pinned to the image extent and never move.
    """

    width: int
    height: int
    cols: tuple[float, ...]
    rows: tuple[float, ...]

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise SizingError(f"image extent must be positive, got {self.width}x{self.height}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "cols", _as_borders(self.cols, self.width, "column"))
        object.__setattr__(self, "rows", _as_borders(self.rows, self.height, "row"))

    @property
    def k_cols(self) -> int:
        return len(self.cols) - 1

    @property
    def k_rows(self) -> int:
        return len(self.rows) - 1

    @property
    def shape(self) -> tuple[int, int]:
        """Pooled output shape, ``(k_rows, k_cols)``."""
        return self.k_rows, self.k_cols

    @property
    def n_movable(self) -> int:
        return self.k_cols - 1 + self.k_rows - 1

    def col_edges(self) -> np.ndarray:
        return round_half_up(self.cols)

    def row_edges(self) -> np.ndarray:
        return round_half_up(self.rows)

    def is_valid(self) -> bool:
        """True when every rounded cell is at least one pixel wide."""
        return _min_gap(self.cols) >= 1 and _min_gap(self.rows) >= 1

    def is_discrete(self) -> bool:
        return all(float(b).is_integer() for b in self.cols + self.rows) and self.is_valid()

    def cell_sizes(self) -> tuple[np.ndarray, np.ndarray]:
        """Pixel heights of the cell rows and widths of the cell columns."""
        return np.diff(self.row_edges()), np.diff(self.col_edges())

    def cell_areas(self) -> np.ndarray:
        """``(k_rows, k_cols)`` array of pixel counts per cell."""
        heights, widths = self.cell_sizes()
        return np.outer(heights, widths)

    def with_border(self, axis: str, index: int, value: float) -> "PoolGrid":
        """Copy of the grid with a single border replaced."""
        if axis == "col":
            cols = list(self.cols)
            cols[index] = value
            return PoolGrid(self.width, self.height, cols, self.rows)
        if axis == "row":
            rows = list(self.rows)
            rows[index] = value
            return PoolGrid(self.width, self.height, self.cols, rows)
        raise ValueError(f"axis must be 'col' or 'row', got {axis!r}")


@dataclass(frozen=True)
class OffsetVector:
    """Displacements for the interior borders of a grid, in pixels."""

    col_offsets: np.ndarray
    row_offsets: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "col_offsets", np.asarray(self.col_offsets, dtype=np.float64).ravel())
        object.__setattr__(self, "row_offsets", np.asarray(self.row_offsets, dtype=np.float64).ravel())

    @classmethod
    def zeros(cls, grid: PoolGrid) -> "OffsetVector":
        return cls(np.zeros(grid.k_cols - 1), np.zeros(grid.k_rows - 1))

    @classmethod
    def from_flat(cls, flat, grid: PoolGrid) -> "OffsetVector":
        """Split a flat ``[cols..., rows...]`` vector for ``grid``."""
        flat = np.asarray(flat, dtype=np.float64).ravel()
        n_cols = grid.k_cols - 1
        if flat.size != grid.n_movable:
            raise ValueError(f"expected {grid.n_movable} offsets, got {flat.size}")
        return cls(flat[:n_cols], flat[n_cols:])

    def flat(self) -> np.ndarray:
        return np.concatenate([self.col_offsets, self.row_offsets])


@dataclass(frozen=True)
class ClampReport:
    """Which interior borders had to be clamped by :func:`apply_offsets`."""

    col_flags: tuple[bool, ...]
    row_flags: tuple[bool, ...]
    overpassed_flags: tuple[bool, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "overpassed_flags", tuple(self.col_flags) + tuple(self.row_flags))

    @property
    def overpass_count(self) -> int:
        return sum(self.overpassed_flags)

    @property
    def total_movable(self) -> int:
        return len(self.overpassed_flags)

    @property
    def fraction(self) -> float:
        if not self.overpassed_flags:
            return 0.0
        return self.overpass_count / self.total_movable


def _uniform_axis(extent: int, k: int) -> list[float]:
    return [i * extent / k for i in range(k + 1)]


def uniform_grid(width: int, height: int, k_cols: int, k_rows: int | None = None) -> PoolGrid:
    """Evenly spaced borders; border ``i`` sits at ``i * extent / k``."""
    if k_rows is None:
        k_rows = k_cols
    if min(width, height, k_cols, k_rows) < 1:
        raise SizingError("extents and cell counts must be positive")
    if width < k_cols or height < k_rows:
        raise SizingError(f"cannot split a {width}x{height} image into {k_cols}x{k_rows} cells")
    return PoolGrid(width, height, _uniform_axis(width, k_cols), _uniform_axis(height, k_rows))


def _clamp_axis(borders: Sequence[float], offsets: np.ndarray) -> tuple[list[float], list[bool]]:
    # Left-to-right sweep: compare with the already-updated left neighbour and
    # the not-yet-updated right neighbour, keeping a 1 px gap on both sides.
    out = list(borders)
    k = len(borders) - 1
    extent = borders[-1]
    if offsets.size != k - 1:
        raise ValueError(f"expected {k - 1} offsets for {k} cells, got {offsets.size}")
    flags = []
    for j in range(1, k):
        moved = borders[j] + float(offsets[j - 1])
        lower = out[j - 1] + 1.0
        # the extra bound leaves room for every border still to the right
        upper = max(min(borders[j + 1] - 1.0, extent - (k - j)), lower)
        clamped = min(max(moved, lower), upper)
        flags.append(clamped != moved)
        out[j] = clamped
    return out, flags


def apply_offsets(grid: PoolGrid, offsets: OffsetVector) -> tuple[PoolGrid, ClampReport]:
    """Move the interior borders by ``offsets``, clamping to keep 1 px gaps.

    A border whose target position would land within one pixel of (or past)
    a neighbour is placed exactly one pixel inside that neighbour and flagged.
    """
    if grid.width < grid.k_cols or grid.height < grid.k_rows:
        raise SizingError("grid has more cells than pixels")
    cols, col_flags = _clamp_axis(grid.cols, offsets.col_offsets)
    rows, row_flags = _clamp_axis(grid.rows, offsets.row_offsets)
    return PoolGrid(grid.width, grid.height, cols, rows), ClampReport(tuple(col_flags), tuple(row_flags))


def _discretize_axis(borders: Sequence[float], extent: int) -> list[float]:
    k = len(borders) - 1
    if k > extent:
        raise SizingError(f"{k} cells do not fit in {extent} pixels")
    edges = [math.floor(b + 0.5) for b in borders]
    edges[0], edges[-1] = 0, extent
    for j in range(1, k):
        edges[j] = max(edges[j], edges[j - 1] + 1)
    # only reachable when the rightward push would run into the outer border
    for j in range(k - 1, 0, -1):
        edges[j] = min(edges[j], edges[j + 1] - 1)
    return [float(e) for e in edges]


def discretize(grid: PoolGrid) -> PoolGrid:
    """Snap borders to whole pixels and restore the 1 px minimum gap."""
    return PoolGrid(
        grid.width,
        grid.height,
        _discretize_axis(grid.cols, grid.width),
        _discretize_axis(grid.rows, grid.height),
    )


def _encode(b: float):
    return int(b) if float(b).is_integer() else b


def grid_to_json(grid: PoolGrid) -> str:
    doc = {
        "w": grid.width,
        "h": grid.height,
        "cols": [_encode(b) for b in grid.cols],
        "rows": [_encode(b) for b in grid.rows],
    }
    return json.dumps(doc)


def grid_from_json(text: str) -> PoolGrid:
    doc = json.loads(text)
    try:
        return PoolGrid(doc["w"], doc["h"], doc["cols"], doc["rows"])
    except KeyError as exc:
        raise ValueError(f"grid document is missing key {exc}") from None
