"""Pixel-adaptive filtering, kernel-derived uncertainty and the two fusion
rules that combine a filtered image with a generated one.

Images are N x C x H x W. A kernel field holds C*K*K channels, one K x K
kernel per pixel per colour channel; a fusion field holds 2*C*K*K channels,
the first C*K*K weighting the filtered image and the rest the generated one.
Within a block, channel ``c*K*K + (dy+r)*K + (dx+r)`` is the weight on the
neighbour at offset (dy, dx), r = (K-1)//2. Outside the image reads as zero.
"""

from __future__ import annotations

import math

import numpy as np

from . import _accel
from .autograd import Tensor, as_tensor, make_op
from .errors import ConfigError, ShapeError

REDUCERS = ("avg", "max", "l1", "l2")


def kernel_size_of(n_weights: int, channels: int) -> int:
    if channels <= 0 or n_weights % channels:
        raise ShapeError(f"{n_weights} kernel channels do not split over {channels} image channels")
    k = math.isqrt(n_weights // channels)
    if k * k * channels != n_weights:
        raise ShapeError(f"{n_weights} kernel channels is not C*K*K for C={channels}")
    if k % 2 == 0:
        raise ConfigError(f"kernel size must be odd, got {k}")
    return k


def _check_pair(img: Tensor, field: Tensor, blocks: int) -> int:
    if img.ndim != 4 or field.ndim != 4:
        raise ShapeError("filtering expects N x C x H x W image and kernel tensors")
    if img.shape[0] != field.shape[0] or img.shape[2:] != field.shape[2:]:
        raise ShapeError(f"image {img.shape} and kernel field {field.shape} disagree on N, H, W")
    if field.shape[1] % blocks:
        raise ShapeError(f"field with {field.shape[1]} channels is not divisible by {blocks}")
    return kernel_size_of(field.shape[1] // blocks, img.shape[1])


def apply_pixelwise_filter(img, kernels) -> Tensor:
    """out(p) = sum over the K x K neighbourhood q of K_p(q - p) * img(q)."""
    img, kernels = as_tensor(img), as_tensor(kernels)
    k = _check_pair(img, kernels, 1)
    out = _accel.filter_forward(img.data, kernels.data, k)

    def bw(g):
        gi, gk = _accel.filter_backward(g, img.data, kernels.data, k)
        return gi, gk

    return make_op("pixel_filter", out, (img, kernels), bw)


def apply_fusion(i1, i2, fusion) -> Tensor:
    """Neighbourhood-weighted blend of two candidate images.

    Equivalent to filtering ``i1`` with the first half of the field plus
    filtering ``i2`` with the second half.
    """
    i1, i2, fusion = as_tensor(i1), as_tensor(i2), as_tensor(fusion)
    if i1.shape != i2.shape:
        raise ShapeError(f"fusion candidates differ in shape: {i1.shape} vs {i2.shape}")
    k = _check_pair(i1, fusion, 2)
    half = fusion.shape[1] // 2
    f1 = np.ascontiguousarray(fusion.data[:, :half])
    f2 = np.ascontiguousarray(fusion.data[:, half:])
    out = _accel.filter_forward(i1.data, f1, k) + _accel.filter_forward(i2.data, f2, k)

    def bw(g):
        g1, gf1 = _accel.filter_backward(g, i1.data, f1, k)
        g2, gf2 = _accel.filter_backward(g, i2.data, f2, k)
        return g1, g2, np.concatenate([gf1, gf2], axis=1)

    return make_op("fusion", out, (i1, i2, fusion), bw)


def identity_kernel_field(h: int, w: int, c: int, k: int = 3, n: int = 1) -> np.ndarray:
    """Kernel field whose every kernel is 1 at the centre offset, else 0."""
    if k < 1 or k % 2 == 0:
        raise ConfigError(f"kernel size must be odd, got {k}")
    field = np.zeros((n, c * k * k, h, w))
    centre = (k * k) // 2
    field[:, centre::k * k] = 1.0
    return field


def raw_kernel_scores(kernels, reducer: str = "avg") -> np.ndarray:
    """Reduce each pixel's C*K*K weights to one score, shape N x 1 x H x W."""
    data = as_tensor(kernels).data
    if reducer == "avg":
        return data.mean(axis=1, keepdims=True)
    if reducer == "max":
        return data.max(axis=1, keepdims=True)
    if reducer == "l1":
        return np.abs(data).sum(axis=1, keepdims=True)
    if reducer == "l2":
        return np.sqrt((data * data).sum(axis=1, keepdims=True))
    raise ConfigError(f"unknown reducer {reducer!r}; choose from {', '.join(REDUCERS)}")


def normalize_scores(raw: np.ndarray) -> np.ndarray:
    """Per-image min-max stretch to [0, 1]; a flat image maps to all zeros."""
    lo = raw.min(axis=(1, 2, 3), keepdims=True)
    hi = raw.max(axis=(1, 2, 3), keepdims=True)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (raw - lo) / safe, 0.0)
    return np.clip(out, 0.0, 1.0)


def compute_uncertainty_map(kernels, reducer: str = "avg") -> Tensor:
    """Uncertainty map in [0, 1], N x 1 x H x W.

    The map is returned detached: it is an input to the fusion network,
    never a path for gradients back into the kernel predictor.
    """
    return Tensor(normalize_scores(raw_kernel_scores(kernels, reducer)))


def naive_fuse(i1, i2, u) -> Tensor:
    """(1 - U) * i1 + U * i2, with U broadcast over colour channels."""
    i1, i2, u = as_tensor(i1), as_tensor(i2), as_tensor(u)
    if i1.shape != i2.shape:
        raise ShapeError(f"fusion candidates differ in shape: {i1.shape} vs {i2.shape}")
    if u.ndim != 4 or u.shape[1] != 1 or u.shape[0] != i1.shape[0] or u.shape[2:] != i1.shape[2:]:
        raise ShapeError(f"uncertainty map {u.shape} does not match images {i1.shape}")
    return (1.0 - u) * i1 + u * i2


def center_fusion_field(u: np.ndarray, c: int, k: int = 3) -> np.ndarray:
    """Fusion field with weights (1 - U, U) at the centre offset only."""
    u = np.asarray(u, dtype=np.float64)
    n, _, h, w = u.shape
    field = np.zeros((n, 2 * c * k * k, h, w))
    centre = (k * k) // 2
    block = c * k * k
    field[:, centre:block:k * k] = 1.0 - u
    field[:, block + centre::k * k] = u
    return field
