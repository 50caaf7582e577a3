"""The encoder-decoder used by every branch, and the three branches built
from it: kernel prediction + filtering, fusion, and a small generator."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import functional as F
from .autograd import Tensor, as_tensor
from .errors import ConfigError, ShapeError
from .filtering import apply_fusion, apply_pixelwise_filter, compute_uncertainty_map
from .layers import Conv2d, ConvBNAct, Module


@dataclass
class UNetConfig:
    in_channels: int = 3
    out_channels: int = 27
    base_width: int = 64
    depth: int = 5
    convs_per_block: int = 3
    input_size: int = 256
    head_width: int = 27
    activation: str = "relu"
    leaky_slope: float = 0.01
    norm: str = "batch"
    out_activation: str | None = None

    def validate(self) -> None:
        if self.depth < 3:
            raise ConfigError(f"depth must be >= 3, got {self.depth}")
        if self.base_width < 1 or self.head_width < 1 or self.convs_per_block < 1:
            raise ConfigError("widths and convs_per_block must be >= 1")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError("channel counts must be >= 1")
        if self.input_size % (2 ** (self.depth - 1)):
            raise ConfigError(
                f"input_size {self.input_size} is not divisible by 2^(depth-1) = {2 ** (self.depth - 1)}"
            )
        if self.activation not in ("relu", "leaky_relu"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.norm not in ("batch", "instance"):
            raise ConfigError(f"unknown norm {self.norm!r}")
        if self.out_activation not in (None, "sigmoid"):
            raise ConfigError(f"unknown output activation {self.out_activation!r}")

    def encoder_widths(self) -> list[int]:
        # 64, 128, 256, 512, 512 at the reference width
        return [self.base_width * min(2**i, 8) for i in range(self.depth)]

    def to_dict(self) -> dict:
        return asdict(self)


class Block(Module):
    def __init__(self, cin, cout, n_convs, stride, cfg: UNetConfig, rng):
        super().__init__()
        self.layers = [
            ConvBNAct(
                cin if i == 0 else cout,
                cout,
                stride=stride if i == 0 else 1,
                activation=cfg.activation,
                slope=cfg.leaky_slope,
                norm=cfg.norm,
                rng=rng,
            )
            for i in range(n_convs)
        ]

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


class UNet(Module):
    """Encoder levels x1..xD (stride-2 entry from level 2 on), D-2 decoder
    blocks each preceded by bilinear x2 upsampling, skip concatenations
    from x_{D-1} down to x3, then a 1x1 conv on [x_last, x2] and a final
    x2 upsampling back to input resolution. x1 is not used as a skip."""

    def __init__(self, cfg: UNetConfig, seed: int = 0):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        widths = cfg.encoder_widths()
        n = cfg.convs_per_block
        self.encoder = []
        cin = cfg.in_channels
        for level, width in enumerate(widths):
            self.encoder.append(Block(cin, width, n, 1 if level == 0 else 2, cfg, rng))
            cin = width
        # decoder block j lands on encoder level D-2-j (0-based)
        self.decoder = []
        for j in range(cfg.depth - 2):
            target = cfg.depth - 2 - j
            if j == 0:
                block_in = widths[-1]
            else:
                block_in = prev_out + widths[target + 1]
            block_out = cfg.head_width if target == 1 else widths[target]
            self.decoder.append(Block(block_in, block_out, n, 1, cfg, rng))
            prev_out = block_out
        self.head = Conv2d(prev_out + widths[1], cfg.out_channels, k=1, rng=rng)

    def forward(self, x: Tensor, return_features: bool = False):
        x = as_tensor(x)
        cfg = self.cfg
        if x.ndim != 4 or x.shape[1] != cfg.in_channels:
            raise ShapeError(f"UNet expects N x {cfg.in_channels} x H x W input, got {x.shape}")
        h, w = x.shape[2:]
        if h % (2 ** (cfg.depth - 1)) or w % (2 ** (cfg.depth - 1)):
            raise ShapeError(f"input {h}x{w} not divisible by 2^{cfg.depth - 1}")
        feats = []
        for block in self.encoder:
            x = block(x)
            feats.append(x)
        y = feats[-1]
        decoded = []
        for j, block in enumerate(self.decoder):
            if j > 0:
                y = F.concat_channels(y, feats[cfg.depth - 2 - j + 1])
            y = block(F.upsample_bilinear_x2(y))
            decoded.append(y)
        y = self.head(F.concat_channels(y, feats[1]))
        y = F.upsample_bilinear_x2(y)
        if cfg.out_activation == "sigmoid":
            y = F.sigmoid(y)
        if return_features:
            return y, feats + decoded
        return y


def build_unet(cfg: UNetConfig, seed: int = 0) -> UNet:
    return UNet(cfg, seed)


def pfunet_config(channels=3, ksize=3, base_width=64, input_size=256, **kw) -> UNetConfig:
    return UNetConfig(
        in_channels=channels,
        out_channels=channels * ksize * ksize,
        base_width=base_width,
        input_size=input_size,
        **kw,
    )


def uafnet_config(channels=3, ksize=3, base_width=64, input_size=256, **kw) -> UNetConfig:
    kk = channels * ksize * ksize
    return UNetConfig(
        in_channels=1 + kk + 2 * channels,
        out_channels=2 * kk,
        base_width=base_width,
        input_size=input_size,
        **kw,
    )


def generator_config(channels=3, base_width=64, input_size=256, **kw) -> UNetConfig:
    # image plus a mask channel in, image out through a sigmoid
    kw.setdefault("out_activation", "sigmoid")
    return UNetConfig(
        in_channels=channels + 1,
        out_channels=channels,
        base_width=base_width,
        input_size=input_size,
        **kw,
    )


def zero_head(net: UNet, bias: np.ndarray | None = None) -> UNet:
    """Zero the final conv; optionally set its bias. Used for constructed
    (identity or selector) networks in tests and tooling."""
    net.head.weight.data = np.zeros_like(net.head.weight.data)
    net.head.bias.data = np.zeros_like(net.head.bias.data) if bias is None else np.asarray(bias, float).copy()
    return net


def pfunet_forward(net1: UNet, img) -> tuple[Tensor, Tensor, Tensor]:
    """Predict kernels from the corrupted image, filter it, derive U."""
    img = as_tensor(img)
    kernels = net1(img)
    i1 = apply_pixelwise_filter(img, kernels)
    u = compute_uncertainty_map(kernels, "avg")
    return i1, kernels, u


def uafnet_forward(net2: UNet, u, kernels, i1, i2) -> tuple[Tensor, Tensor]:
    """Predict a fusion field from [U, K, i1, i2] and fuse i1 with i2."""
    u, kernels, i1, i2 = (as_tensor(t) for t in (u, kernels, i1, i2))
    x = F.cat_channels([u, kernels, i1, i2])
    if x.shape[1] != net2.cfg.in_channels:
        raise ShapeError(
            f"fusion network expects {net2.cfg.in_channels} input channels, got {x.shape[1]}"
        )
    if net2.cfg.out_channels != 2 * kernels.shape[1]:
        raise ShapeError(
            f"fusion network outputs {net2.cfg.out_channels} channels, need {2 * kernels.shape[1]}"
        )
    fusion = net2(x)
    return apply_fusion(i1, i2, fusion), fusion


def _mask_tensor(mask, img: Tensor) -> Tensor:
    m = as_tensor(mask)
    if m.ndim == 2:
        m = Tensor(m.data[None, None])
    elif m.ndim == 3:
        m = Tensor(m.data[:, None])
    if m.shape[0] != img.shape[0] or m.shape[1] != 1 or m.shape[2:] != img.shape[2:]:
        raise ShapeError(f"mask {m.shape} does not match image {img.shape}")
    return m


def toy_generator_forward(gen: UNet, img, mask) -> Tensor:
    """Predict a full image from (img, mask); keep known pixels verbatim."""
    img = as_tensor(img)
    m = _mask_tensor(mask, img)
    pred = gen(F.concat_channels(img, m))
    if pred.shape != img.shape:
        raise ShapeError(f"generator produced {pred.shape} for input {img.shape}")
    return img * (1.0 - m) + pred * m


def classical_fill_generator(img, mask, iterations: int = 500, tol: float = 1e-6) -> Tensor:
    """Fill the hole by Jacobi diffusion of the 4-neighbour mean.

    Masked pixels start at the per-channel mean of the known pixels and are
    repeatedly replaced by the mean of their in-image 4-neighbours until the
    largest update falls under ``tol`` or ``iterations`` is reached.
    """
    if iterations < 1:
        raise ConfigError("iterations must be >= 1")
    x = np.array(as_tensor(img).data, dtype=np.float64)
    m = _mask_tensor(mask, Tensor(x)).data.astype(bool)
    hole = np.broadcast_to(m, x.shape)
    if not hole.any():
        return Tensor(x)
    known = ~m
    for b in range(x.shape[0]):
        kb = known[b, 0]
        if kb.any():
            fill = x[b][:, kb].mean(axis=1)
            x[b][:, ~kb] = fill[:, None]
    h, w = x.shape[2:]
    ones = np.ones((1, 1, h, w))
    count = np.zeros_like(ones)
    count[..., 1:, :] += 1
    count[..., :-1, :] += 1
    count[..., :, 1:] += 1
    count[..., :, :-1] += 1
    for _ in range(iterations):
        s = np.zeros_like(x)
        s[..., 1:, :] += x[..., :-1, :]
        s[..., :-1, :] += x[..., 1:, :]
        s[..., :, 1:] += x[..., :, :-1]
        s[..., :, :-1] += x[..., :, 1:]
        new = np.where(hole, s / np.maximum(count, 1), x)
        delta = np.abs(new - x).max()
        x = new
        if delta < tol:
            break
    return Tensor(x)
