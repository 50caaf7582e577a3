"""Network ops on N x C x H x W tensors: convolution, normalization,
activations, resampling and channel plumbing."""

from __future__ import annotations

import numpy as np

from .autograd import Tensor, as_tensor, make_op
from .errors import ConfigError, ShapeError


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_op("relu", x.data * mask, (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    scale = np.where(x.data > 0, 1.0, slope)
    return make_op("leaky_relu", x.data * scale, (x,), lambda g: (g * scale,))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return make_op("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def _check_rank4(x: Tensor, what: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{what} expects an N x C x H x W tensor, got shape {x.shape}")


def conv2d(
    x: Tensor,
    w: Tensor,
    b: Tensor | None = None,
    stride: int = 1,
    padding: str | int | tuple[int, int] = "same",
) -> Tensor:
    """Cross-correlation with zero padding.

    ``padding="same"`` pads (k-1)//2 on each side, so stride 1 keeps H x W
    and stride 2 halves even extents. An int or (ph, pw) pads explicitly.
    """
    _check_rank4(x, "conv2d")
    if w.ndim != 4:
        raise ShapeError(f"conv2d weight must be Cout x Cin x kh x kw, got {w.shape}")
    n, cin, h, wd = x.shape
    cout, wcin, kh, kw = w.shape
    if wcin != cin:
        raise ShapeError(f"conv2d: input has {cin} channels, weight expects {wcin}")
    if b is not None and b.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {b.shape} does not match {cout} output channels")
    if stride not in (1, 2):
        raise ConfigError(f"conv2d stride must be 1 or 2, got {stride}")
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ConfigError("same padding needs odd kernel extents")
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
    elif isinstance(padding, int):
        ph = pw = padding
    else:
        ph, pw = padding
    hp, wp = h + 2 * ph, wd + 2 * pw
    if hp < kh or wp < kw:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    # im2col laid out as (Cin, kh, kw, N, Ho, Wo) so both products are plain matmuls
    xt = xp.transpose(1, 0, 2, 3)
    cols = np.empty((cin, kh, kw, n, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xt[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]
    cols2 = cols.reshape(cin * kh * kw, n * ho * wo)
    w2 = w.data.reshape(cout, cin * kh * kw)
    out = (w2 @ cols2).reshape(cout, n, ho, wo).transpose(1, 0, 2, 3)
    if b is not None:
        out = out + b.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def bw(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(cout, n * ho * wo)
        gw = (g2 @ cols2.T).reshape(w.shape) if w.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if (b is not None and b.requires_grad) else None
        gx = None
        if x.requires_grad:
            gcols = (w2.T @ g2).reshape(cin, kh, kw, n, ho, wo)
            gxt = np.zeros((cin, n, hp, wp))
            for i in range(kh):
                for j in range(kw):
                    gxt[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += gcols[:, i, j]
            gx = gxt[:, :, ph:ph + h, pw:pw + wd].transpose(1, 0, 2, 3)
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return make_op("conv2d", out, parents, bw)


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray | None = None,
    running_var: np.ndarray | None = None,
    training: bool = True,
    momentum: float = 0.1,
    eps: float = 1e-5,
    per_instance: bool = False,
) -> Tensor:
    """Per-channel standardization followed by an affine map.

    In training mode the batch statistics are used and the running buffers
    (if given) are updated in place; in eval mode the running buffers are
    used. ``per_instance`` takes statistics over H x W of each sample alone
    (instance-norm behaviour), in both modes.
    """
    _check_rank4(x, "batchnorm")
    if eps < 0:
        raise ConfigError(f"batchnorm eps must be non-negative, got {eps}")
    n, c, h, w = x.shape
    axes = (2, 3) if per_instance else (0, 2, 3)
    count = h * w if per_instance else n * h * w
    if count == 0:
        raise ShapeError("batchnorm over a zero-size channel")
    g = gamma.data.reshape(1, c, 1, 1)
    bt = beta.data.reshape(1, c, 1, 1)

    if training or per_instance:
        mean = x.data.mean(axis=axes, keepdims=True)
        var = x.data.var(axis=axes, keepdims=True)
        if training and running_mean is not None:
            bm = mean.mean(axis=0).reshape(c) if per_instance else mean.reshape(c)
            bv = var.mean(axis=0).reshape(c) if per_instance else var.reshape(c)
            unbiased = bv * count / (count - 1) if count > 1 else bv
            running_mean *= 1.0 - momentum
            running_mean += momentum * bm
            running_var *= 1.0 - momentum
            running_var += momentum * unbiased
        invstd = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mean) * invstd
        out = g * xhat + bt

        def bw(grad):
            gg = (grad * xhat).sum(axis=(0, 2, 3))
            gbt = grad.sum(axis=(0, 2, 3))
            dxhat = grad * g
            gx = (invstd / count) * (
                count * dxhat
                - dxhat.sum(axis=axes, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
            )
            return gx, gg, gbt

    else:
        if running_mean is None or running_var is None:
            raise ConfigError("eval-mode batchnorm needs running statistics")
        invstd = 1.0 / np.sqrt(running_var.reshape(1, c, 1, 1) + eps)
        xhat = (x.data - running_mean.reshape(1, c, 1, 1)) * invstd
        out = g * xhat + bt

        def bw(grad):
            return grad * g * invstd, (grad * xhat).sum(axis=(0, 2, 3)), grad.sum(axis=(0, 2, 3))

    return make_op("batchnorm", out, (x, gamma, beta), bw)


def _bilinear_matrix(n: int) -> np.ndarray:
    """2n x n interpolation matrix, corner-aligned."""
    m = np.zeros((2 * n, n))
    if n == 1:
        m[:, 0] = 1.0
        return m
    pos = np.arange(2 * n) * (n - 1) / (2 * n - 1)
    lo = np.minimum(np.floor(pos).astype(int), n - 2)
    frac = pos - lo
    rows = np.arange(2 * n)
    m[rows, lo] = 1.0 - frac
    m[rows, lo + 1] += frac
    return m


def upsample_bilinear_x2(x: Tensor) -> Tensor:
    """Bilinear x2 upsampling with the outermost samples aligned to the
    input corners (a 1 x 2 row [0, 1] becomes [0, 1/3, 2/3, 1])."""
    _check_rank4(x, "upsample_bilinear_x2")
    h, w = x.shape[2], x.shape[3]
    if h < 1 or w < 1:
        raise ShapeError("upsample needs H, W >= 1")
    ah, aw = _bilinear_matrix(h), _bilinear_matrix(w)
    out = np.einsum("ih,nchw,jw->ncij", ah, x.data, aw, optimize=True)
    return make_op(
        "upsample",
        out,
        (x,),
        lambda g: (np.einsum("ih,ncij,jw->nchw", ah, g, aw, optimize=True),),
    )


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_rank4(a, "concat_channels")
    _check_rank4(b, "concat_channels")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat_channels: spatial/batch mismatch {a.shape} vs {b.shape}")
    ca = a.shape[1]
    return make_op(
        "concat",
        np.concatenate([a.data, b.data], axis=1),
        (a, b),
        lambda g: (g[:, :ca], g[:, ca:]),
    )


def cat_channels(tensors) -> Tensor:
    out = tensors[0]
    for t in tensors[1:]:
        out = concat_channels(out, t)
    return out


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    _check_rank4(x, "slice_channels")

    def bw(g):
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        return (full,)

    return make_op("slice", x.data[:, start:stop].copy(), (x,), bw)
