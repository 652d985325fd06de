"""Learnable non-uniform grid pooling.

Average pooling over grids whose border positions can be moved per input,
with forward-difference gradients for the borders, importance-map grids,
and a learning-rate controller driven by how often borders collide.
"""
__version__ = "0.1.0"

from .grid import (
    ClampReport,
    OffsetVector,
    PoolGrid,
    SizingError,
    apply_offsets,
    discretize,
    grid_from_json,
    grid_to_json,
    uniform_grid,
)
from .pooling import (
    Border,
    BorderGradient,
    border_gradient,
    chain_border_gradients,
    input_gradient,
    pool_forward,
)
from .importance import Roi, RoiSpec, build_map, compress, grid_from_importance
from .training import LrState, ToyTask, gradcheck, lr_step, train_demo
from ._backend import kernels as _kernels

BACKEND = _kernels.BACKEND

__all__ = [
    "BACKEND",
    "Border",
    "BorderGradient",
    "ClampReport",
    "LrState",
    "OffsetVector",
    "PoolGrid",
    "Roi",
    "RoiSpec",
    "SizingError",
    "ToyTask",
    "apply_offsets",
    "border_gradient",
    "build_map",
    "chain_border_gradients",
    "compress",
    "discretize",
    "grid_from_importance",
    "grid_from_json",
    "grid_to_json",
    "gradcheck",
    "input_gradient",
    "lr_step",
    "pool_forward",
    "train_demo",
    "uniform_grid",
]
