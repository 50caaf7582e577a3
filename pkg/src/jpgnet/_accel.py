"""Hot loops of the pixel-adaptive operators.

Two interchangeable backends compute the same thing:

* ``numba``: explicit per-pixel loops compiled with ``@njit``.
* ``numpy``: a vectorized loop over the K*K neighbourhood offsets.

The backend is picked once at import time from ``JPGNET_BACKEND``
(``numba`` or ``numpy``); when unset, numba is used if it imports.
``set_backend`` switches at runtime, which the tests and the benchmark use.

Array layout everywhere is N x C x H x W. A kernel field has C*K*K
channels; channel ``c*K*K + (dy+r)*K + (dx+r)`` weights the neighbour at
offset (dy, dx) of colour channel c, with r = (K-1)//2. Pixels outside the
image read as zero.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_requested = os.environ.get("JPGNET_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ImportError(f"JPGNET_BACKEND must be 'numba' or 'numpy', got {_requested!r}")
_backend = "numpy" if (_requested == "numpy" or not HAVE_NUMBA) else "numba"


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


# -- numpy path -------------------------------------------------------------


def _filter_forward_np(img, ker, ksize):
    n, c, h, w = img.shape
    r = ksize // 2
    kr = ker.reshape(n, c, ksize * ksize, h, w)
    pad = np.pad(img, ((0, 0), (0, 0), (r, r), (r, r)))
    out = np.zeros_like(img)
    for i in range(ksize):
        for j in range(ksize):
            out += kr[:, :, i * ksize + j] * pad[:, :, i:i + h, j:j + w]
    return out


def _filter_backward_np(grad, img, ker, ksize):
    n, c, h, w = img.shape
    r = ksize // 2
    kr = ker.reshape(n, c, ksize * ksize, h, w)
    pad = np.pad(img, ((0, 0), (0, 0), (r, r), (r, r)))
    gpad = np.zeros_like(pad)
    gker = np.empty_like(kr)
    for i in range(ksize):
        for j in range(ksize):
            gker[:, :, i * ksize + j] = grad * pad[:, :, i:i + h, j:j + w]
            gpad[:, :, i:i + h, j:j + w] += grad * kr[:, :, i * ksize + j]
    return gpad[:, :, r:r + h, r:r + w].copy(), gker.reshape(ker.shape)


# -- numba path -------------------------------------------------------------

if HAVE_NUMBA:

    # Offset-outer loops: for each (channel, dy, dx) the valid rows and
    # columns are computed once, so the innermost loop runs over contiguous
    # x without branches and vectorizes.

    @njit(cache=True)
    def _filter_forward_nb(img, ker, ksize):
        n, c, h, w = img.shape
        r = ksize // 2
        kk = ksize * ksize
        out = np.zeros_like(img)
        for b in range(n):
            for ch in range(c):
                for i in range(ksize):
                    dy = i - r
                    y0, y1 = max(0, -dy), min(h, h - dy)
                    for j in range(ksize):
                        dx = j - r
                        x0, x1 = max(0, -dx), min(w, w - dx)
                        k = ch * kk + i * ksize + j
                        for y in range(y0, y1):
                            for x in range(x0, x1):
                                out[b, ch, y, x] += ker[b, k, y, x] * img[b, ch, y + dy, x + dx]
        return out

    @njit(cache=True)
    def _filter_backward_nb(grad, img, ker, ksize):
        n, c, h, w = img.shape
        r = ksize // 2
        kk = ksize * ksize
        gimg = np.zeros_like(img)
        gker = np.zeros_like(ker)
        for b in range(n):
            for ch in range(c):
                for i in range(ksize):
                    dy = i - r
                    y0, y1 = max(0, -dy), min(h, h - dy)
                    for j in range(ksize):
                        dx = j - r
                        x0, x1 = max(0, -dx), min(w, w - dx)
                        k = ch * kk + i * ksize + j
                        for y in range(y0, y1):
                            for x in range(x0, x1):
                                g = grad[b, ch, y, x]
                                gker[b, k, y, x] = g * img[b, ch, y + dy, x + dx]
                                gimg[b, ch, y + dy, x + dx] += g * ker[b, k, y, x]
        return gimg, gker


def filter_forward(img: np.ndarray, ker: np.ndarray, ksize: int) -> np.ndarray:
    img = np.ascontiguousarray(img, dtype=np.float64)
    ker = np.ascontiguousarray(ker, dtype=np.float64)
    if _backend == "numba":
        return _filter_forward_nb(img, ker, ksize)
    return _filter_forward_np(img, ker, ksize)


def filter_backward(grad: np.ndarray, img: np.ndarray, ker: np.ndarray, ksize: int):
    grad = np.ascontiguousarray(grad, dtype=np.float64)
    img = np.ascontiguousarray(img, dtype=np.float64)
    ker = np.ascontiguousarray(ker, dtype=np.float64)
    if _backend == "numba":
        return _filter_backward_nb(grad, img, ker, ksize)
    return _filter_backward_np(grad, img, ker, ksize)
