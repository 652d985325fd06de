"""Command line entry point: ``adaptive-pool <subcommand> ...``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .grid import grid_from_json, grid_to_json, uniform_grid, discretize
from .images import face_image, load_image, load_importance_map, render_grid, save_image, upscale
from .importance import build_map, compress, load_roi_spec, roi_spec_to_json
from .pooling import pool_forward
from .training import ToyTask, gradcheck, train_demo

logger = logging.getLogger("adaptive_pool")


def _write_text(path, text):
    with open(path, "w") as fh:
        fh.write(text)
        fh.write("\n")


def _k_rows(args):
    return args.k_rows if args.k_rows is not None else args.k


def _save_pooled(args, pooled, grid):
    if args.upscale:
        pooled = upscale(pooled, grid)
    save_image(pooled, args.output)
    if args.grid_out:
        _write_text(args.grid_out, grid_to_json(grid))


def cmd_pool(args):
    image = load_image(args.input)
    height, width = image.shape[:2]
    grid = discretize(uniform_grid(width, height, args.k, _k_rows(args)))
    _save_pooled(args, pool_forward(image, grid), grid)


def cmd_compress(args):
    image = load_image(args.input)
    height, width = image.shape[:2]
    if args.rois:
        importance = build_map(load_roi_spec(args.rois), width, height)
    else:
        importance = load_importance_map(args.importance)
    pooled, grid = compress(image, importance, args.k, _k_rows(args))
    _save_pooled(args, pooled, grid)


def cmd_grid_viz(args):
    with open(args.grid) as fh:
        grid = grid_from_json(fh.read())
    if not grid.is_valid():
        raise ValueError(f"{args.grid}: grid has cells narrower than one pixel")
    save_image(render_grid(grid), args.output)


def cmd_train_demo(args):
    task = ToyTask(seed=args.seed)
    report = train_demo(
        task,
        k=args.k,
        iters=args.iters,
        base_lr=args.lr,
        seed=args.seed,
        mode=args.mode,
        dynamic_lr=not args.static_lr,
        batch_size=args.batch_size,
    )
    print(
        f"final loss {report.final_loss:.6f}  final lr {report.final_lr:g}  "
        f"cell area roi {report.roi_cell_area:.2f} / outside {report.outside_cell_area:.2f}"
    )
    if args.report:
        _write_text(args.report, report.to_json())
    if args.grid_out:
        _write_text(args.grid_out, grid_to_json(report.final_grid))


def cmd_gradcheck(args):
    report = gradcheck(seed=args.seed, n=args.n)
    for failure in report.failures:
        print(failure, file=sys.stderr)
    print(report.summary())
    return 0 if report.ok else 1


def cmd_face(args):
    image, spec = face_image(args.size, args.seed)
    save_image(image, args.output)
    if args.rois_out:
        _write_text(args.rois_out, roi_spec_to_json(spec))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptive-pool", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_k(p, default=None, rows=True):
        p.add_argument("--k", type=int, required=default is None, default=default,
                       help="cells per axis (columns)" if rows else "cells per axis")
        if rows:
            p.add_argument("--k-rows", type=int, default=None, help="cell rows, if different from --k")

    def add_output(p):
        p.add_argument("--output", required=True, help="pooled image (.pgm or .png)")
        p.add_argument("--grid-out", help="write the grid as JSON")
        p.add_argument("--upscale", action="store_true",
                       help="paint pooled cells back at source resolution")

    p = sub.add_parser("pool", help="uniform average pooling")
    p.add_argument("--input", required=True)
    add_k(p)
    add_output(p)
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("compress", help="importance-weighted pooling")
    p.add_argument("--input", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--rois", help="RoiSpec JSON")
    src.add_argument("--importance", help="grayscale importance map image")
    add_k(p)
    add_output(p)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("grid-viz", help="render a grid JSON (small cells white)")
    p.add_argument("--grid", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_grid_viz)

    p = sub.add_parser("train-demo", help="train the offset predictor on the toy task")
    add_k(p, default=6, rows=False)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--lr", type=float, default=0.01, help="initial offset-head learning rate")
    p.add_argument("--static-lr", action="store_true", help="disable the dynamic learning rate")
    p.add_argument("--mode", choices=("learned", "uniform", "importance"), default="learned")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="write the training report as JSON")
    p.add_argument("--grid-out", help="write the final grid as JSON")
    p.set_defaults(func=cmd_train_demo)

    p = sub.add_parser("gradcheck", help="check gradients against brute force")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=100, help="number of random instances")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("face", help="write a synthetic face test image")
    p.add_argument("--output", required=True)
    p.add_argument("--rois-out", help="write the eye rectangles as RoiSpec JSON")
    p.add_argument("--size", type=int, default=112)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_face)
    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        for name in ("k", "k_rows"):
            value = getattr(args, name, None)
            if value is not None and value < 1:
                parser.error(f"--{name.replace('_', '-')} must be >= 1")
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        status = args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return status or 0


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
