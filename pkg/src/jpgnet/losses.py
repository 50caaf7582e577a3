"""Differentiable SSIM and the L1 - lambda * SSIM training loss."""

from __future__ import annotations

import numpy as np

from . import functional as F
from .autograd import Tensor, as_tensor, make_op
from .errors import ShapeError

WINDOW = 11
SIGMA = 1.5
C1 = 0.01**2
C2 = 0.03**2
DEFAULT_LAMBDA = 0.2


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _blur_rows(a: np.ndarray, g: np.ndarray, axis: int) -> np.ndarray:
    k = g.size
    m = a.shape[axis] - k + 1
    out = np.zeros(a.shape[:axis] + (m,) + a.shape[axis + 1:])
    for i in range(k):
        out += g[i] * np.take(a, np.arange(i, i + m), axis=axis)
    return out


def _blur_rows_adjoint(g_out: np.ndarray, g: np.ndarray, axis: int, n: int) -> np.ndarray:
    k = g.size
    m = g_out.shape[axis]
    out = np.zeros(g_out.shape[:axis] + (n,) + g_out.shape[axis + 1:])
    for i in range(k):
        idx = [slice(None)] * out.ndim
        idx[axis] = slice(i, i + m)
        out[tuple(idx)] += g[i] * g_out
    return out


def gaussian_blur_valid(x: Tensor, g: np.ndarray) -> Tensor:
    """Separable blur with 1-D taps ``g`` along H then W, valid region only.

    Every output element is accumulated in the same fixed tap order, so
    identical input planes give bit-identical outputs.
    """
    h, w = x.shape[2:]
    out = _blur_rows(_blur_rows(x.data, g, 2), g, 3)

    def bw(grad):
        t = _blur_rows_adjoint(grad, g, 3, w)
        return (_blur_rows_adjoint(t, g, 2, h),)

    return make_op("gaussian_blur", out, (x,), bw)


def _check_pair(x: Tensor, y: Tensor) -> None:
    if x.shape != y.shape:
        raise ShapeError(f"image shapes differ: {x.shape} vs {y.shape}")
    if x.ndim != 4:
        raise ShapeError(f"expected N x C x H x W images, got {x.shape}")


def ssim_map(x, y, window: int = WINDOW, sigma: float = SIGMA) -> Tensor:
    """Local SSIM on the valid region, shape (N*C) x 1 x H' x W'."""
    x, y = as_tensor(x), as_tensor(y)
    _check_pair(x, y)
    n, c, h, w = x.shape
    if h < window or w < window:
        raise ShapeError(f"SSIM window {window} larger than image {h}x{w}")
    g = gaussian_window(window, sigma)
    xs = x.reshape(n * c, 1, h, w)
    ys = y.reshape(n * c, 1, h, w)
    blurred = gaussian_blur_valid(F.cat_channels([xs, ys, xs * xs, ys * ys, xs * ys]), g)
    mx, my, exx, eyy, exy = (F.slice_channels(blurred, i, i + 1) for i in range(5))
    mxy = mx * my
    mxx = mx * mx
    myy = my * my
    num = (2.0 * mxy + C1) * (2.0 * (exy - mxy) + C2)
    den = (mxx + myy + C1) * ((exx - mxx) + (eyy - myy) + C2)
    return num / den


def ssim(x, y) -> Tensor:
    """Mean SSIM over the valid region of every channel (11x11 Gaussian
    window, sigma 1.5, unit dynamic range)."""
    return ssim_map(x, y).mean()


def mean_l1(x, y) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    if x.shape != y.shape:
        raise ShapeError(f"image shapes differ: {x.shape} vs {y.shape}")
    return (x - y).abs().mean()


def loss_l1_ssim(pred, target, lam: float = DEFAULT_LAMBDA) -> Tensor:
    """mean |pred - target| - lam * SSIM(pred, target)."""
    pred, target = as_tensor(pred), as_tensor(target)
    _check_pair(pred, target)
    l1 = mean_l1(pred, target)
    if lam == 0:
        return l1
    return l1 - lam * ssim(pred, target)
