"""Average pooling over non-uniform grids and its gradients.

Images are numpy arrays of shape ``(H, W)`` or ``(H, W, C)``; pooled maps
come back as ``(k_rows, k_cols)`` or ``(k_rows, k_cols, C)`` to match. One
grid is shared by every channel.

Border gradients are forward differences: the border is probed ``h`` whole
pixels to the right (or down), the image is re-pooled, and the change of
each pooled value is divided by ``h``. A probe that would leave a cell
narrower than one pixel yields a zero gradient for that border.
"""
from __future__ import annotations

import functools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import _backend
from .grid import PoolGrid

__all__ = [
    "Border",
    "BorderGradient",
    "as_image",
    "pool_forward",
    "border_gradient",
    "chain_border_gradients",
    "chain_border_gradients_many",
    "input_gradient",
    "average_pool",
]


class Border(NamedTuple):
    """An interior border: ``axis`` is ``"col"`` or ``"row"``, ``index`` in ``1..k-1``."""

    axis: str
    index: int


@dataclass(frozen=True)
class BorderGradient:
    """Loss gradient for every movable border, plus the probe step used."""

    cols: np.ndarray
    rows: np.ndarray
    h: int

    def flat(self) -> np.ndarray:
        """``[cols..., rows...]``, the same layout as ``OffsetVector.flat``."""
        return np.concatenate([self.cols, self.rows])

    def __getitem__(self, border: Border) -> float:
        values = self.cols if border.axis == "col" else self.rows
        return float(values[border.index - 1])


@functools.lru_cache(maxsize=None)
def _kernels_named(name):
    return _backend.load(name)


def _kernels(backend):
    if backend is None:
        return _backend.kernels
    return _kernels_named(backend)


def as_image(image) -> np.ndarray:
    """View ``image`` as a C-contiguous float64 ``(H, W, C)`` array."""
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[0] < 1 or x.shape[1] < 1 or x.shape[2] < 1:
        raise ValueError(f"image must be (H, W) or (H, W, C), got shape {np.shape(image)}")
    return np.ascontiguousarray(x)


def _edges(x: np.ndarray, grid: PoolGrid) -> tuple[np.ndarray, np.ndarray]:
    if (grid.height, grid.width) != x.shape[:2]:
        raise ValueError(
            f"grid covers {grid.height}x{grid.width} but image is {x.shape[0]}x{x.shape[1]}"
        )
    re, ce = grid.row_edges(), grid.col_edges()
    if np.any(np.diff(re) < 1) or np.any(np.diff(ce) < 1):
        raise ValueError("grid has cells narrower than one pixel; discretize it first")
    return re, ce


def _like_input(image, out: np.ndarray) -> np.ndarray:
    return out[:, :, 0] if np.ndim(image) == 2 else out


def pool_forward(image, grid: PoolGrid, *, backend: str | None = None) -> np.ndarray:
    """Mean of each grid cell, per channel."""
    x = as_image(image)
    re, ce = _edges(x, grid)
    return _like_input(image, _kernels(backend).pool_mean(x, re, ce))


def _check_h(h) -> int:
    if int(h) != h or h < 1:
        raise ValueError(f"probe step h must be a positive integer, got {h}")
    return int(h)


def border_gradient(image, grid: PoolGrid, border: Border, h: int = 1, *,
                    backend: str | None = None) -> np.ndarray:
    """Derivative of every pooled value with respect to one border position.

    Returns an array shaped like ``pool_forward(image, grid)``; only the two
    cell strips touching ``border`` can be nonzero.
    """
    h = _check_h(h)
    x = as_image(image)
    re, ce = _edges(x, grid)
    axis, index = border
    k = grid.k_cols if axis == "col" else grid.k_rows
    if axis not in ("col", "row"):
        raise ValueError(f"axis must be 'col' or 'row', got {axis!r}")
    if not 1 <= index <= k - 1:
        raise ValueError(f"{axis} border {index} is not movable (valid: 1..{k - 1})")
    kern = _kernels(backend)
    y = kern.pool_mean(x, re, ce)
    diff = kern.border_diff(x, re, ce, y, 0 if axis == "col" else 1, index, h)
    return _like_input(image, diff)


def _upstream(upstream, y_shape) -> np.ndarray:
    u = np.asarray(upstream, dtype=np.float64)
    if u.ndim == 2:
        u = u[:, :, None]
    if u.shape != y_shape:
        raise ValueError(f"upstream gradient has shape {np.shape(upstream)}, expected {y_shape}")
    return np.ascontiguousarray(u)


def chain_border_gradients(image, grid: PoolGrid, upstream, h: int = 1, *,
                           backend: str | None = None) -> BorderGradient:
    """Border gradients of a loss, given ``upstream = dL/dy``.

    Each entry is an exactly rounded sum of ``upstream * dy/dp`` over the
    cells and channels adjacent to that border, so the result does not
    depend on summation order.
    """
    h = _check_h(h)
    x = as_image(image)
    re, ce = _edges(x, grid)
    kern = _kernels(backend)
    y = kern.pool_mean(x, re, ce)
    u = _upstream(upstream, y.shape)
    gc, gr = kern.chain(x, re, ce, y, u, h)
    return BorderGradient(np.asarray(gc), np.asarray(gr), h)


def chain_border_gradients_many(images: Sequence, grids: Sequence[PoolGrid], upstreams: Sequence,
                                h: int = 1, *, backend: str | None = None) -> list[BorderGradient]:
    """:func:`chain_border_gradients` over a batch, fanned out across threads.

    Thread count comes from ``ADAPTIVE_POOL_THREADS``. Samples are independent,
    so results are identical for any thread count.
    """
    jobs = list(zip(images, grids, upstreams))
    workers = min(_backend.thread_count(), len(jobs))
    run = functools.partial(_chain_one, h=h, backend=backend)
    if workers <= 1:
        return [run(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, jobs))


def _chain_one(job, h, backend):
    image, grid, upstream = job
    return chain_border_gradients(image, grid, upstream, h, backend=backend)


def input_gradient(grid: PoolGrid, upstream) -> np.ndarray:
    """Gradient of the loss with respect to the input pixels.

    Each pixel receives ``upstream / n`` of the cell that contains it.
    """
    u = np.asarray(upstream, dtype=np.float64)
    squeeze = u.ndim == 2
    u = _upstream(u, (grid.k_rows, grid.k_cols, u.shape[2] if u.ndim == 3 else 1))
    heights, widths = grid.cell_sizes()
    if np.any(heights < 1) or np.any(widths < 1):
        raise ValueError("grid has cells narrower than one pixel; discretize it first")
    per_pixel = u / grid.cell_areas()[:, :, None]
    out = np.repeat(np.repeat(per_pixel, heights, axis=0), widths, axis=1)
    return out[:, :, 0] if squeeze else out


def average_pool(image, stride: int) -> np.ndarray:
    """Fixed-stride average pooling; extents must be divisible by ``stride``."""
    x = as_image(image)
    h, w, c = x.shape
    if h % stride or w % stride:
        raise ValueError(f"{h}x{w} is not divisible by stride {stride}")
    out = x.reshape(h // stride, stride, w // stride, stride, c).mean(axis=(1, 3))
    return _like_input(image, out)

