"""Numpy reference implementation of the hot kernels.

Semantics are pinned here; the compiled extension in ``_core.pyx`` mirrors
them operation-for-operation, including summation order, so both backends
produce bit-identical results.

Column layout for im2col/col2im: input (N, C, H, W) maps to a matrix of
shape (N*OH*OW, C*KH*KW), rows ordered n-major then output-row then
output-column, columns ordered channel-major then kernel-row then
kernel-column. Out-of-bounds taps (implicit zero padding) contribute zeros.
"""

import numpy as np


def conv_out_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, sh: int, sw: int, ph: int, pw: int) -> np.ndarray:
    n, c, h, w = x.shape
    oh = conv_out_size(h, kh, sh, ph)
    ow = conv_out_size(w, kw, sw, pw)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw]
    return np.ascontiguousarray(cols.transpose(0, 4, 5, 1, 2, 3).reshape(n * oh * ow, c * kh * kw))


def col2im(
    cols: np.ndarray,
    x_shape: tuple,
    kh: int,
    kw: int,
    sh: int,
    sw: int,
    ph: int,
    pw: int,
) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-adds columns back onto the image."""
    n, c, h, w = x_shape
    oh = conv_out_size(h, kh, sh, ph)
    ow = conv_out_size(w, kw, sw, pw)
    cols6 = cols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    xp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)
    # (i, j) outermost fixes the accumulation order per output element; the
    # compiled kernel repeats the same order so the sums match bitwise.
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw] += cols6[:, :, i, j]
    return np.ascontiguousarray(xp[:, :, ph : ph + h, pw : pw + w])


def draw_polylines(canvas: np.ndarray, xs: np.ndarray, ys: np.ndarray, value: int = 255) -> None:
    """Rasterize integer polylines into a 2-D uint8 canvas, in place.

    ``xs``/``ys`` have shape (n_lines, n_points); each row is one polyline.
    Strokes overwrite (no blending). Coordinates must already lie inside the
    canvas; the caller clamps.
    """
    n_lines, n_points = xs.shape
    for r in range(n_lines):
        for p in range(n_points - 1):
            _line(canvas, int(xs[r, p]), int(ys[r, p]), int(xs[r, p + 1]), int(ys[r, p + 1]), value)
        if n_points == 1:
            canvas[int(ys[r, 0]), int(xs[r, 0])] = value


def _line(canvas, x0, y0, x1, y1, value):
    # Classic integer Bresenham; both backends must trace identical pixels.
    dx = abs(x1 - x0)
    sx = 1 if x0 < x1 else -1
    dy = -abs(y1 - y0)
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        canvas[y0, x0] = value
        if x0 == x1 and y0 == y1:
            return
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy
