"""Pure numpy kernels, used when the compiled extension is unavailable.

All functions take an image laid out as ``(H, W, C)`` float64 and integer
edge arrays that already satisfy the 1 px gap. Axis codes: 0 = column
borders, 1 = row borders.
"""
import math

import numpy as np

BACKEND = "python"


def pool_mean(x, row_edges, col_edges):
    # cell sums: accumulate rows of each band first, then the columns of each cell
    band = np.add.reduceat(x, row_edges[:-1], axis=0)
    sums = np.add.reduceat(band, col_edges[:-1], axis=1)
    areas = np.outer(np.diff(row_edges), np.diff(col_edges)).astype(np.float64)
    return sums / areas[:, :, None]


def _moved(row_edges, col_edges, axis, j, h):
    row_edges, col_edges = row_edges.copy(), col_edges.copy()
    if axis == 0:
        col_edges[j] += h
    else:
        row_edges[j] += h
    return row_edges, col_edges


def overpasses(row_edges, col_edges, axis, j, h):
    edges = col_edges if axis == 0 else row_edges
    return edges[j] + h >= edges[j + 1]


def border_diff(x, row_edges, col_edges, y, axis, j, h):
    """Forward difference of every pooled value for a ``+h`` probe of one border."""
    if overpasses(row_edges, col_edges, axis, j, h):
        return np.zeros_like(y)
    y_moved = pool_mean(x, *_moved(row_edges, col_edges, axis, j, h))
    return (y_moved - y) / h


def chain(x, row_edges, col_edges, y, upstream, h):
    """Upstream-weighted border gradients, one exactly rounded sum per border."""
    out = []
    for axis, edges in ((0, col_edges), (1, row_edges)):
        grads = np.zeros(len(edges) - 2)
        for j in range(1, len(edges) - 1):
            diff = border_diff(x, row_edges, col_edges, y, axis, j, h)
            grads[j - 1] = math.fsum((upstream * diff).ravel())
        out.append(grads)
    return out[0], out[1]
