# cython: language_level=3
"""Compiled fast path for the hot kernels.

Mirrors ``csiloc.kernels.pure`` exactly: same column layout, same
accumulation order in col2im, same Bresenham pixel trace, so results are
bit-identical to the numpy reference.
"""

cimport cython

import numpy as np

ctypedef fused real_t:
    float
    double


def _out_size(int size, int kernel, int stride, int padding):
    return (size + 2 * padding - kernel) // stride + 1


@cython.boundscheck(False)
@cython.wraparound(False)
def im2col(real_t[:, :, :, ::1] x, int kh, int kw, int sh, int sw, int ph, int pw):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t ow = (w + 2 * pw - kw) // sw + 1
    dtype = np.float32 if real_t is float else np.float64
    out = np.zeros((n * oh * ow, c * kh * kw), dtype=dtype)
    cdef real_t[:, ::1] cols = out
    cdef Py_ssize_t b, oy, ox, ch, i, j, iy, ix, row, col
    with nogil:
        for b in range(n):
            for oy in range(oh):
                for ox in range(ow):
                    row = (b * oh + oy) * ow + ox
                    for ch in range(c):
                        for i in range(kh):
                            iy = oy * sh + i - ph
                            if iy < 0 or iy >= h:
                                continue
                            for j in range(kw):
                                ix = ox * sw + j - pw
                                if ix < 0 or ix >= w:
                                    continue
                                col = (ch * kh + i) * kw + j
                                cols[row, col] = x[b, ch, iy, ix]
    return out


@cython.boundscheck(False)
@cython.wraparound(False)
def col2im(real_t[:, ::1] cols, x_shape, int kh, int kw, int sh, int sw, int ph, int pw):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t oh = (h + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t ow = (w + 2 * pw - kw) // sw + 1
    dtype = np.float32 if real_t is float else np.float64
    out = np.zeros((n, c, h, w), dtype=dtype)
    cdef real_t[:, :, :, ::1] xg = out
    cdef Py_ssize_t b, oy, ox, ch, i, j, iy, ix, row, col
    with nogil:
        # (i, j) outermost: accumulation order per pixel matches pure.col2im.
        for i in range(kh):
            for j in range(kw):
                for b in range(n):
                    for ch in range(c):
                        col = (ch * kh + i) * kw + j
                        for oy in range(oh):
                            iy = oy * sh + i - ph
                            if iy < 0 or iy >= h:
                                continue
                            for ox in range(ow):
                                ix = ox * sw + j - pw
                                if ix < 0 or ix >= w:
                                    continue
                                row = (b * oh + oy) * ow + ox
                                xg[b, ch, iy, ix] += cols[row, col]
    return out


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _line(unsigned char[:, ::1] canvas, Py_ssize_t x0, Py_ssize_t y0,
                Py_ssize_t x1, Py_ssize_t y1, unsigned char value) nogil:
    cdef Py_ssize_t dx = x1 - x0 if x1 >= x0 else x0 - x1
    cdef Py_ssize_t sx = 1 if x0 < x1 else -1
    cdef Py_ssize_t dy = -(y1 - y0 if y1 >= y0 else y0 - y1)
    cdef Py_ssize_t sy = 1 if y0 < y1 else -1
    cdef Py_ssize_t err = dx + dy
    cdef Py_ssize_t e2
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


@cython.boundscheck(False)
@cython.wraparound(False)
def draw_polylines(unsigned char[:, ::1] canvas, long long[:, ::1] xs,
                   long long[:, ::1] ys, int value=255):
    cdef Py_ssize_t n_lines = xs.shape[0], n_points = xs.shape[1]
    cdef Py_ssize_t r, p
    cdef unsigned char v = <unsigned char> value
    with nogil:
        for r in range(n_lines):
            for p in range(n_points - 1):
                _line(canvas, xs[r, p], ys[r, p], xs[r, p + 1], ys[r, p + 1], v)
            if n_points == 1:
                canvas[ys[r, 0], xs[r, 0]] = v
