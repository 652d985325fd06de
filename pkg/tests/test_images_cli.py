import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from adaptive_pool.cli import run_cli
from adaptive_pool.grid import PoolGrid, grid_from_json, uniform_grid
from adaptive_pool.images import (
    ImageFormatError,
    face_image,
    load_image,
    render_grid,
    save_image,
    upscale,
)
from adaptive_pool.importance import build_map, grid_from_importance
from adaptive_pool.pooling import average_pool


@pytest.mark.parametrize("suffix", [".pgm", ".png"])
def test_round_trip_gray(tmp_path, rng, suffix):
    pixels = rng.integers(0, 256, (17, 23)).astype(np.uint8)
    path = tmp_path / f"a{suffix}"
    save_image(pixels / 255.0, path)
    back = load_image(path)
    assert back.shape == (17, 23)
    assert np.array_equal(np.round(back * 255).astype(np.uint8), pixels)


def test_round_trip_rgb(tmp_path, rng):
    pixels = rng.integers(0, 256, (9, 11, 3)).astype(np.uint8)
    save_image(pixels / 255.0, tmp_path / "a.png")
    assert np.array_equal(np.round(load_image(tmp_path / "a.png") * 255).astype(np.uint8), pixels)


def test_pgm_is_binary_graymap(tmp_path):
    save_image(np.zeros((3, 4)), tmp_path / "a.pgm")
    assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5")
    with pytest.raises(ImageFormatError):
        save_image(np.zeros((3, 4, 3)), tmp_path / "b.pgm")


def test_sixteen_bit_rejected(tmp_path):
    Image.fromarray(np.full((4, 4), 1000, dtype=np.uint16)).save(tmp_path / "deep.png")
    with pytest.raises(ImageFormatError, match="unsupported"):
        load_image(tmp_path / "deep.png")


def test_unreadable_file(tmp_path):
    (tmp_path / "junk.pgm").write_bytes(b"not an image")
    with pytest.raises(ImageFormatError):
        load_image(tmp_path / "junk.pgm")
    with pytest.raises(ImageFormatError):
        load_image(tmp_path / "missing.pgm")


def test_face_image(tmp_path):
    image, spec = face_image(112)
    assert image.shape == (112, 112)
    save_image(image, tmp_path / "f.pgm")
    assert load_image(tmp_path / "f.pgm").shape == (112, 112)
    assert len(spec.rois) == 2


def test_render_uniform_grid():
    out = render_grid(uniform_grid(8, 8, 4))
    assert np.array_equal(out, np.full((8, 8), 0.5))


def test_render_extremes():
    g = PoolGrid(5, 1, [0, 1, 5], [0, 1])
    assert render_grid(g).tolist() == [[1.0, 0.0, 0.0, 0.0, 0.0]]


def test_render_importance_grid_brighter_in_rois():
    image, spec = face_image(112)
    g = grid_from_importance(build_map(spec, 112, 112), 30)
    shade = render_grid(g)
    mask = np.zeros((112, 112), bool)
    for r in spec.rois:
        mask[r.y:r.y + r.h, r.x:r.x + r.w] = True
    assert shade[mask].mean() > shade[~mask].mean()


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.data())
def test_render_monotone_in_area(w, h, data):
    def axis(extent):
        inner = data.draw(st.sets(st.integers(1, extent - 1), max_size=6)) if extent > 1 else set()
        return [0, *sorted(inner), extent]

    g = PoolGrid(w, h, axis(w), axis(h))
    shade = render_grid(g)
    areas = upscale(g.cell_areas().astype(float), g)
    order = np.argsort(areas.ravel(), kind="stable")
    assert np.all(np.diff(shade.ravel()[order]) <= 0)


def test_upscale_shape():
    g = PoolGrid(6, 4, [0, 2, 6], [0, 3, 4])
    out = upscale(np.array([[1.0, 2.0], [3.0, 4.0]]), g)
    assert out.shape == (4, 6)
    assert out[0].tolist() == [1, 1, 2, 2, 2, 2]
    assert out[3].tolist() == [3, 3, 4, 4, 4, 4]


# -- command line ---------------------------------------------------------------


@pytest.fixture
def face_files(tmp_path):
    assert run_cli(["face", "--output", str(tmp_path / "a.pgm"), "--rois-out", str(tmp_path / "rois.json")]) == 0
    return tmp_path


def test_cli_pool(face_files, tmp_path):
    image = load_image(face_files / "a.pgm")
    assert run_cli(["pool", "--input", str(face_files / "a.pgm"), "--k", "28", "--output", str(tmp_path / "b.pgm")]) == 0
    out = load_image(tmp_path / "b.pgm")
    assert out.shape == (28, 28)
    # cell means of 8-bit data can sit on a rounding tie; allow one level either way
    np.testing.assert_allclose(out, average_pool(image, 4), atol=0.5 / 255 + 1e-9)


def test_cli_compress_and_viz(face_files, tmp_path):
    args = ["compress", "--input", str(face_files / "a.pgm"), "--rois", str(face_files / "rois.json"),
            "--k", "30", "--output", str(tmp_path / "b.pgm"), "--grid-out", str(tmp_path / "g.json")]
    assert run_cli(args) == 0
    assert load_image(tmp_path / "b.pgm").shape == (30, 30)
    grid = grid_from_json((tmp_path / "g.json").read_text())
    assert grid.shape == (30, 30) and grid.is_discrete()
    assert run_cli(["grid-viz", "--grid", str(tmp_path / "g.json"), "--output", str(tmp_path / "v.png")]) == 0
    assert load_image(tmp_path / "v.png").shape == (112, 112)


def test_cli_compress_importance_map(face_files, tmp_path):
    save_image(np.ones((112, 112)), tmp_path / "m.pgm")
    args = ["compress", "--input", str(face_files / "a.pgm"), "--importance", str(tmp_path / "m.pgm"),
            "--k", "28", "--output", str(tmp_path / "b.pgm")]
    assert run_cli(args) == 0
    args = ["pool", "--input", str(face_files / "a.pgm"), "--k", "28", "--output", str(tmp_path / "c.pgm")]
    assert run_cli(args) == 0
    assert (tmp_path / "b.pgm").read_bytes() == (tmp_path / "c.pgm").read_bytes()


def test_cli_upscale(face_files, tmp_path):
    args = ["pool", "--input", str(face_files / "a.pgm"), "--k", "30", "--output", str(tmp_path / "b.png"), "--upscale"]
    assert run_cli(args) == 0
    assert load_image(tmp_path / "b.png").shape == (112, 112)


def test_cli_gradcheck(capsys):
    assert run_cli(["gradcheck", "--seed", "7"]) == 0
    assert capsys.readouterr().out.strip() == "100/100 pass"


def test_cli_train_demo(tmp_path, capsys):
    args = ["train-demo", "--iters", "15", "--report", str(tmp_path / "r.json"), "--grid-out", str(tmp_path / "g.json")]
    assert run_cli(args) == 0
    assert "final loss" in capsys.readouterr().out
    assert len(json.loads((tmp_path / "r.json").read_text())["iterations"]) == 15
    assert grid_from_json((tmp_path / "g.json").read_text()).width == 32


@pytest.mark.parametrize(
    "argv",
    [[], ["pool"], ["pool", "--input", "a.pgm", "--output", "b.pgm"], ["nope"],
     ["pool", "--input", "a.pgm", "--k", "0", "--output", "b.pgm"],
     ["compress", "--input", "a", "--rois", "r", "--importance", "m", "--k", "3", "--output", "o"]],
)
def test_cli_usage_errors(argv, capsys):
    assert run_cli(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_cli_runtime_errors(tmp_path, capsys):
    assert run_cli(["pool", "--input", str(tmp_path / "missing.pgm"), "--k", "3", "--output", str(tmp_path / "o.pgm")]) == 1
    assert capsys.readouterr().err.startswith("error:")
    save_image(np.zeros((4, 4)), tmp_path / "small.pgm")
    assert run_cli(["pool", "--input", str(tmp_path / "small.pgm"), "--k", "9", "--output", str(tmp_path / "o.pgm")]) == 1
