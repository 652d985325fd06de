"""Learning-rate control and a small end-to-end training harness.

The harness trains an affine offset predictor together with a linear
readout on a synthetic task whose target depends only on a hidden
rectangle of the image. Border gradients flow back from the readout
through :func:`chain_border_gradients`.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
import numpy as np

from .grid import OffsetVector, PoolGrid, apply_offsets, discretize, grid_to_json, uniform_grid
from .importance import Roi, RoiSpec, build_map, grid_from_importance, mean_cell_area
from .pooling import (
    Border,
    as_image,
    border_gradient,
    chain_border_gradients,
    chain_border_gradients_many,
    input_gradient,
    pool_forward,
)

logger = logging.getLogger(__name__)

__all__ = [
    "LR_MIN",
    "LR_MAX",
    "LrState",
    "lr_step",
    "OffsetPredictor",
    "ToyTask",
    "TrainingReport",
    "TrainingDiverged",
    "train_demo",
    "GradcheckReport",
    "gradcheck",
]

LR_MIN = 1e-6
LR_MAX = 1e-1
LR_WINDOW = 10
RAISE_BELOW = 0.10
LOWER_ABOVE = 0.20


@dataclass(frozen=True)
class LrState:
    """Offset-head learning rate and the overpass fractions seen since the last adjustment."""

    lr: float = 0.01
    window: tuple[float, ...] = ()
    iteration: int = 0
    lo: float = LR_MIN
    hi: float = LR_MAX

    def __post_init__(self):
        if not self.lo <= self.lr <= self.hi:
            raise ValueError(f"lr {self.lr} outside [{self.lo}, {self.hi}]")


def lr_step(state: LrState, overpass_fraction: float) -> LrState:
    """Record one iteration's overpass fraction; adjust every tenth iteration.

    The mean fraction over the window lowers the rate tenfold above 20%,
    raises it tenfold below 10%, and leaves it alone in between.
    """
    if not 0.0 <= overpass_fraction <= 1.0:
        raise ValueError(f"overpass fraction must be in [0, 1], got {overpass_fraction}")
    window = state.window + (float(overpass_fraction),)
    iteration = state.iteration + 1
    if iteration % LR_WINDOW:
        return replace(state, window=window, iteration=iteration)
    mean = math.fsum(window) / len(window)
    lr = state.lr
    if mean > LOWER_ABOVE:
        lr = lr * 0.1
    elif mean < RAISE_BELOW:
        lr = lr * 10.0
    lr = min(max(lr, state.lo), state.hi)
    return replace(state, lr=lr, window=(), iteration=iteration)


def _features(image: np.ndarray, stride: int) -> np.ndarray:
    x = as_image(image)
    return x[::stride, ::stride, :].mean(axis=2).ravel()


@dataclass
class OffsetPredictor:
    """Affine map from a strided subsample of the image to border offsets."""

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 4

    @classmethod
    def zeros(cls, image_shape: tuple[int, int], grid: PoolGrid, stride: int = 4) -> "OffsetPredictor":
        n_in = len(range(0, image_shape[0], stride)) * len(range(0, image_shape[1], stride))
        return cls(np.zeros((grid.n_movable, n_in)), np.zeros(grid.n_movable), stride)

    def features(self, image) -> np.ndarray:
        return _features(image, self.stride)

    def __call__(self, image) -> np.ndarray:
        return self.weights @ self.features(image) + self.bias


def _blur_matrix(n: int, sigma: float) -> np.ndarray:
    idx = np.arange(n)
    k = np.exp(-0.5 * ((idx[:, None] - idx[None, :]) / sigma) ** 2)
    return k / k.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class ToyTask:
    """Smooth random images whose regression target lives in a hidden rectangle.

    The target is ``[mean intensity inside roi, roi centre x / size]``.
    """

    seed: int = 0
    size: int = 32
    roi: Roi = Roi(12, 12, 8, 8)
    smoothness: float = 1.0

    def __post_init__(self):
        r = self.roi
        if r.x + r.w > self.size or r.y + r.h > self.size:
            raise ValueError(f"{r} does not fit in a {self.size}x{self.size} image")

    def images(self, rng: np.random.Generator, n: int) -> np.ndarray:
        blur = _blur_matrix(self.size, self.smoothness)
        noise = rng.standard_normal((n, self.size, self.size))
        fields = blur @ noise @ blur.T
        scale = 0.25 / fields.std()
        return np.clip(0.5 + scale * fields, 0.0, 1.0)

    def targets(self, images: np.ndarray) -> np.ndarray:
        r = self.roi
        means = images[:, r.y:r.y + r.h, r.x:r.x + r.w].mean(axis=(1, 2))
        centre = np.full_like(means, (r.x + r.w / 2) / self.size)
        return np.stack([means, centre], axis=1)

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        images = self.images(rng, n)
        return images, self.targets(images)

    def roi_mask(self) -> np.ndarray:
        mask = np.zeros((self.size, self.size), dtype=bool)
        r = self.roi
        mask[r.y:r.y + r.h, r.x:r.x + r.w] = True
        return mask

    def importance_map(self) -> np.ndarray:
        return build_map(RoiSpec(rois=(self.roi,)), self.size, self.size)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainingReport:
    mode: str
    dynamic_lr: bool
    loss: list[float]
    lr: list[float]
    overpass: list[float]
    final_loss: float
    final_lr: float
    final_grid: PoolGrid
    roi_cell_area: float
    outside_cell_area: float
    eval_grids: list[PoolGrid] = field(default_factory=list, repr=False)
    predictor: OffsetPredictor | None = field(default=None, repr=False)

    def to_json(self) -> str:
        doc = {
            "mode": self.mode,
            "dynamic_lr": self.dynamic_lr,
            "final_loss": self.final_loss,
            "final_lr": self.final_lr,
            "roi_cell_area": self.roi_cell_area,
            "outside_cell_area": self.outside_cell_area,
            "iterations": [
                {"loss": l, "lr": r, "overpass": o}
                for l, r, o in zip(self.loss, self.lr, self.overpass)
            ],
            "final_grid": json.loads(grid_to_json(self.final_grid)),
        }
        return json.dumps(doc, indent=1)


@dataclass
class _Readout:
    weights: np.ndarray
    bias: np.ndarray

    def __call__(self, pooled: np.ndarray) -> np.ndarray:
        return self.weights @ (pooled.ravel() - 0.5) + self.bias


GRID_MODES = ("learned", "uniform", "importance")


def _euclidean(err: np.ndarray) -> tuple[float, np.ndarray]:
    norm = float(np.sqrt(err @ err))
    if norm == 0.0:
        return 0.0, np.zeros_like(err)
    return norm, err / norm


def _finite_mean(values: np.ndarray) -> float:
    # nan marks grids with no cell on that side of the roi
    kept = values[~np.isnan(values)]
    return float(kept.mean()) if kept.size else math.nan


def train_demo(task: ToyTask, k: int = 6, iters: int = 2000, base_lr: float = 0.01, seed: int = 0, *,
               mode: str = "learned", dynamic_lr: bool = True, batch_size: int = 16,
               readout_lr: float = 3e-3, h: int = 1, eval_size: int = 256,
               backend: str | None = None) -> TrainingReport:
    """Train on ``task`` and report per-iteration statistics.

    ``mode`` picks the pooling grid: ``"learned"`` predicts offsets per image,
    ``"uniform"`` and ``"importance"`` keep a fixed grid and train only the
    readout. Everything is seeded from ``task.seed`` and ``seed``.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if mode not in GRID_MODES:
        raise ValueError(f"mode must be one of {GRID_MODES}, got {mode!r}")

    size = task.size
    base = uniform_grid(size, size, k, k)
    if mode == "importance":
        fixed = grid_from_importance(task.importance_map(), k, k)
    else:
        fixed = discretize(base)

    train_rng = np.random.default_rng([task.seed, seed])
    eval_images, eval_targets = task.sample(np.random.default_rng([task.seed, 2**31]), eval_size)

    predictor = OffsetPredictor.zeros((size, size), base)
    readout = _Readout(np.zeros((2, k * k)), np.zeros(2))
    state = LrState(lr=base_lr) if dynamic_lr else None
    learned = mode == "learned"

    def grids_for(images):
        if not learned:
            return [fixed] * len(images), 0.0, None
        grids, flags = [], []
        for x in images:
            moved, report = apply_offsets(base, OffsetVector.from_flat(predictor(x), base))
            grids.append(discretize(moved))
            flags.append(report.overpassed_flags)
        flags = np.asarray(flags, dtype=bool)
        return grids, float(flags.mean()), flags

    losses, lrs, fractions = [], [], []
    for it in range(iters):
        images, targets = task.sample(train_rng, batch_size)
        grids, fraction, flags = grids_for(images)
        lr = state.lr if state is not None else base_lr

        grad_w = np.zeros_like(readout.weights)
        grad_b = np.zeros_like(readout.bias)
        upstreams, batch_loss = [], 0.0
        for x, t, g in zip(images, targets, grids):
            y = pool_forward(x, g, backend=backend)
            loss, de = _euclidean(readout(y) - t)
            batch_loss += loss
            grad_w += np.outer(de, y.ravel() - 0.5)
            grad_b += de
            upstreams.append((readout.weights.T @ de).reshape(y.shape))
        batch_loss /= batch_size
        if not math.isfinite(batch_loss):
            raise TrainingDiverged(f"loss became {batch_loss} at iteration {it} (offset lr {lr:g})")

        if learned:
            border_grads = chain_border_gradients_many(images, grids, upstreams, h, backend=backend)
            grad_pw = np.zeros_like(predictor.weights)
            grad_pb = np.zeros_like(predictor.bias)
            for x, bg, clamped in zip(images, border_grads, flags):
                # a clamped border did not follow its offset: no gradient
                g_off = np.where(clamped, 0.0, bg.flat())
                grad_pw += np.outer(g_off, predictor.features(x))
                grad_pb += g_off
            predictor.weights -= lr * grad_pw / batch_size
            predictor.bias -= lr * grad_pb / batch_size

        readout.weights -= readout_lr * grad_w / batch_size
        readout.bias -= readout_lr * grad_b / batch_size

        losses.append(batch_loss)
        lrs.append(lr)
        fractions.append(fraction)
        if state is not None:
            state = lr_step(state, fraction)
        if it % 500 == 0:
            logger.info("iter %d loss %.5f lr %.2g overpass %.3f", it, batch_loss, lr, fraction)

    eval_grids, _, _ = grids_for(eval_images)
    eval_losses = [
        _euclidean(readout(pool_forward(x, g, backend=backend)) - t)[0]
        for x, t, g in zip(eval_images, eval_targets, eval_grids)
    ]
    final_loss = float(np.mean(eval_losses))
    if not math.isfinite(final_loss):
        raise TrainingDiverged(f"evaluation loss is {final_loss}")
    mask = task.roi_mask()
    areas = np.array([mean_cell_area(g, mask) for g in eval_grids])
    return TrainingReport(
        mode=mode,
        dynamic_lr=state is not None,
        loss=losses,
        lr=lrs,
        overpass=fractions,
        final_loss=final_loss,
        final_lr=state.lr if state is not None else base_lr,
        final_grid=eval_grids[0],
        roi_cell_area=_finite_mean(areas[:, 0]),
        outside_cell_area=_finite_mean(areas[:, 1]),
        eval_grids=eval_grids,
        predictor=predictor if learned else None,
    )


# -- gradient check -----------------------------------------------------------


@dataclass
class GradcheckReport:
    passed: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.passed + len(self.failures)

    @property
    def ok(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        return f"{self.passed}/{self.total} pass"


def _random_instance(rng: np.random.Generator, max_size: int = 12, max_k: int = 4):
    height, width = (int(v) for v in rng.integers(1, max_size + 1, size=2))
    channels = int(rng.integers(1, 3))
    k_rows = int(rng.integers(1, min(max_k, height) + 1))
    k_cols = int(rng.integers(1, min(max_k, width) + 1))
    base = uniform_grid(width, height, k_cols, k_rows)
    offsets = OffsetVector(rng.normal(0.0, 2.0, k_cols - 1), rng.normal(0.0, 2.0, k_rows - 1))
    grid = discretize(apply_offsets(base, offsets)[0])
    image = rng.random((height, width, channels))
    upstream = rng.standard_normal((k_rows, k_cols, channels))
    return image, grid, upstream


def _movable(grid: PoolGrid) -> list[Border]:
    return [Border("col", j) for j in range(1, grid.k_cols)] + [Border("row", j) for j in range(1, grid.k_rows)]


def _probed(grid: PoolGrid, border: Border, h: int) -> PoolGrid | None:
    """``grid`` with one border moved by ``+h``, or None if that overpasses a neighbour."""
    positions = grid.cols if border.axis == "col" else grid.rows
    try:
        moved = grid.with_border(border.axis, border.index, positions[border.index] + h)
    except ValueError:
        return None
    return moved if moved.is_valid() else None


def _probe_oracle(image, grid: PoolGrid, upstream, border: Border, h: int,
                  backend: str | None = None) -> float:
    """Re-pool the whole image with one border moved and difference the outputs."""
    moved = _probed(grid, border, h)
    if moved is None:
        return 0.0
    diff = (pool_forward(image, moved, backend=backend) - pool_forward(image, grid, backend=backend)) / h
    return math.fsum((upstream * diff).ravel())


def check_instance(image, grid: PoolGrid, upstream, h: int = 1, fd_step: float = 1e-4,
                   fd_tol: float = 1e-6, backend: str | None = None) -> list[str]:
    """Compare all gradients of ``sum(upstream * y)`` against brute force; return problems."""
    problems = []
    got = chain_border_gradients(image, grid, upstream, h, backend=backend)
    y = pool_forward(image, grid, backend=backend)
    for border in _movable(grid):
        want = _probe_oracle(image, grid, upstream, border, h, backend)
        if got[border] != want:
            problems.append(f"{border}: chained {got[border]!r} != brute force {want!r}")
        per_cell = border_gradient(image, grid, border, h, backend=backend)
        moved = _probed(grid, border, h)
        brute = np.zeros_like(y) if moved is None else (pool_forward(image, moved, backend=backend) - y) / h
        if not np.array_equal(per_cell, brute):
            problems.append(f"{border}: per-cell derivative differs from re-pooling")

    analytic = input_gradient(grid, upstream)
    x = np.array(image, dtype=np.float64)
    numeric = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        saved = x[idx]
        x[idx] = saved + fd_step
        plus = math.fsum((upstream * pool_forward(x, grid)).ravel())
        x[idx] = saved - fd_step
        minus = math.fsum((upstream * pool_forward(x, grid)).ravel())
        x[idx] = saved
        numeric[idx] = (plus - minus) / (2 * fd_step)
    worst = float(np.max(np.abs(numeric - analytic)))
    if worst > fd_tol:
        problems.append(f"input gradient off by {worst:.3g} (tolerance {fd_tol:g})")
    return problems


def gradcheck(seed: int = 0, n: int = 100, h: int = 1, backend: str | None = None) -> GradcheckReport:
    """Check border and input gradients on ``n`` random small instances."""
    rng = np.random.default_rng(seed)
    report = GradcheckReport()
    for i in range(n):
        image, grid, upstream = _random_instance(rng)
        problems = check_instance(image, grid, upstream, h, backend=backend)
        if problems:
            report.failures.append(f"instance {i}: " + "; ".join(problems))
        else:
            report.passed += 1
    return report
