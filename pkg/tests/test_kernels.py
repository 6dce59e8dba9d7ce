"""Backend parity: the compiled kernels must reproduce the numpy reference
bit for bit, and col2im must be the exact adjoint of im2col."""

import numpy as np
import pytest

from csiloc import kernels

pytestmark = pytest.mark.skipif(
    "compiled" not in kernels.available_backends(), reason="compiled kernels not built"
)


@pytest.fixture(autouse=True)
def restore_backend():
    yield
    kernels.use_backend("auto")


CASES = [(3, 3, 1, 1, 1, 1), (4, 4, 2, 2, 1, 1), (1, 1, 1, 1, 0, 0), (5, 3, 2, 1, 2, 0), (2, 2, 3, 3, 0, 0)]


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("case", CASES)
def test_im2col_col2im_bitwise_parity(dtype, case, rng):
    kh, kw, sh, sw, ph, pw = case
    x = rng.normal(size=(2, 3, 11, 9)).astype(dtype)

    kernels.use_backend("pure")
    cols_pure = kernels.im2col(x, kh, kw, sh, sw, ph, pw)
    probe = rng.normal(size=cols_pure.shape).astype(dtype)
    img_pure = kernels.col2im(probe, x.shape, kh, kw, sh, sw, ph, pw)

    kernels.use_backend("compiled")
    cols_fast = kernels.im2col(x, kh, kw, sh, sw, ph, pw)
    img_fast = kernels.col2im(probe, x.shape, kh, kw, sh, sw, ph, pw)

    assert cols_pure.dtype == cols_fast.dtype == dtype
    assert np.array_equal(cols_pure, cols_fast)
    assert np.array_equal(img_pure, img_fast)


@pytest.mark.parametrize("case", CASES)
def test_adjointness_of_im2col_col2im(case, rng):
    kh, kw, sh, sw, ph, pw = case
    x = rng.normal(size=(2, 2, 10, 8))
    cols = kernels.im2col(x, kh, kw, sh, sw, ph, pw)
    probe = rng.normal(size=cols.shape)
    back = kernels.col2im(probe, x.shape, kh, kw, sh, sw, ph, pw)
    lhs = float((cols * probe).sum())
    rhs = float((x * back).sum())
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


def test_polyline_parity_on_random_strokes(rng):
    for _ in range(25):
        n_lines = int(rng.integers(1, 6))
        n_points = int(rng.integers(1, 12))
        xs = rng.integers(0, 48, size=(n_lines, n_points))
        ys = rng.integers(0, 48, size=(n_lines, n_points))
        a = np.zeros((48, 48), dtype=np.uint8)
        b = np.zeros((48, 48), dtype=np.uint8)
        kernels.use_backend("pure")
        kernels.draw_polylines(a, xs, ys)
        kernels.use_backend("compiled")
        kernels.draw_polylines(b, xs, ys)
        assert np.array_equal(a, b)


def test_polyline_rejects_out_of_canvas(rng):
    canvas = np.zeros((8, 8), dtype=np.uint8)
    with pytest.raises(ValueError):
        kernels.draw_polylines(canvas, np.array([[0, 9]]), np.array([[0, 1]]))


def test_backend_selection_api():
    assert kernels.use_backend("pure") == "pure"
    assert kernels.active_backend() == "pure"
    assert kernels.use_backend("auto") in ("pure", "compiled")
    with pytest.raises(ValueError):
        kernels.use_backend("gpu")
