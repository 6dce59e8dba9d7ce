"""Hot numeric kernels with backend selection at import time.

The compiled Cython extension is preferred when importable; the numpy
reference in :mod:`csiloc.kernels.pure` is the fallback. Both produce
bit-identical results (verified by tests), so the choice only affects
speed. Pin a backend with the ``CSILOC_KERNELS`` environment variable
(``pure``/``compiled``/``auto``) or :func:`use_backend`; the CLI's
``--fixed-reduction`` flag pins ``pure`` so outputs never depend on
whether the extension was built.
"""

import os

import numpy as np

from . import pure as _pure

try:
    from . import _core as _compiled
except ImportError:  # extension not built; numpy path handles everything
    _compiled = None

conv_out_size = _pure.conv_out_size

_active_name = "pure"
_active = _pure


def available_backends():
    names = ["pure"]
    if _compiled is not None:
        names.append("compiled")
    return names


def use_backend(name: str) -> str:
    """Select ``pure``, ``compiled`` or ``auto``; returns the active name."""
    global _active, _active_name
    if name == "auto":
        name = "compiled" if _compiled is not None else "pure"
    if name == "pure":
        _active, _active_name = _pure, "pure"
    elif name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available; rebuild the extension")
        _active, _active_name = _compiled, "compiled"
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    return _active_name


def active_backend() -> str:
    return _active_name


def im2col(x, kh, kw, sh=1, sw=1, ph=0, pw=0):
    x = np.ascontiguousarray(x)
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float64)
    return _active.im2col(x, kh, kw, sh, sw, ph, pw)


def col2im(cols, x_shape, kh, kw, sh=1, sw=1, ph=0, pw=0):
    cols = np.ascontiguousarray(cols)
    if cols.dtype not in (np.float32, np.float64):
        cols = cols.astype(np.float64)
    return _active.col2im(cols, tuple(int(s) for s in x_shape), kh, kw, sh, sw, ph, pw)


def draw_polylines(canvas, xs, ys, value=255):
    if canvas.dtype != np.uint8 or not canvas.flags.c_contiguous:
        raise ValueError("canvas must be a C-contiguous uint8 array")
    xs = np.ascontiguousarray(xs, dtype=np.int64)
    ys = np.ascontiguousarray(ys, dtype=np.int64)
    if not xs.flags.writeable:  # broadcast views stay read-only even when contiguous
        xs = xs.copy()
    if not ys.flags.writeable:
        ys = ys.copy()
    if xs.shape != ys.shape or xs.ndim != 2:
        raise ValueError("xs/ys must be matching 2-D arrays")
    if xs.size:
        lo_ok = xs.min() >= 0 and ys.min() >= 0
        hi_ok = xs.max() < canvas.shape[1] and ys.max() < canvas.shape[0]
        if not (lo_ok and hi_ok):
            raise ValueError("polyline coordinates fall outside the canvas")
        _active.draw_polylines(canvas, xs, ys, value)


use_backend(os.environ.get("CSILOC_KERNELS", "auto"))
