"""Two-stage training: the kernel predictor and the generator first, then
the fusion network with both of them frozen."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .autograd import Tensor, no_grad
from .checkpoint import save_checkpoint
from .data import corrupt_batch, mask_bank
from .errors import ConfigError
from .filtering import center_fusion_field, identity_kernel_field
from .layers import Module
from .losses import loss_l1_ssim
from .networks import (
    UNet,
    build_unet,
    generator_config,
    pfunet_config,
    pfunet_forward,
    toy_generator_forward,
    uafnet_config,
    uafnet_forward,
    zero_head,
)
from .optim import Adam
from .pipeline import GeneratorLike, run_generator

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 2e-4
    lambda_ssim: float = 0.2
    batch_size: int = 2
    stage1_iters: int = 2000
    stage2_iters: int = 1000
    gen_iters: int = 2000
    seed: int = 0
    checkpoint_every: int = 0
    image_size: int = 64
    base_width: int = 8
    kernel_size: int = 3
    mask_bank_size: int = 256
    log_every: int = 100
    head_init: str = "identity"

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.lambda_ssim < 0:
            raise ConfigError("lambda_ssim must be >= 0")
        for name in ("stage1_iters", "stage2_iters", "gen_iters", "checkpoint_every"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.batch_size < 1 or self.mask_bank_size < 1:
            raise ConfigError("batch_size and mask_bank_size must be >= 1")
        if self.head_init not in ("identity", "kaiming"):
            raise ConfigError(f"head_init must be 'identity' or 'kaiming', got {self.head_init!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


def build_networks(cfg: TrainConfig, channels: int = 3) -> dict[str, UNet]:
    """Fresh kernel, generator and fusion networks at the configured scale.
    Each gets its own init seed derived from ``cfg.seed``.

    With ``head_init="identity"`` the kernel head starts at zero weights
    plus an identity-kernel bias (filtering passes the input through) and
    the fusion head at an even centre blend of the two candidates.
    """
    common = dict(base_width=cfg.base_width, input_size=cfg.image_size)
    k = cfg.kernel_size
    nets = {
        "pfu": build_unet(pfunet_config(channels, k, **common), seed=cfg.seed * 3 + 1),
        "gen": build_unet(generator_config(channels, **common), seed=cfg.seed * 3 + 2),
        "uaf": build_unet(uafnet_config(channels, k, **common), seed=cfg.seed * 3 + 3),
    }
    if cfg.head_init == "identity":
        zero_head(nets["pfu"], identity_kernel_field(1, 1, channels, k)[0, :, 0, 0])
        zero_head(nets["uaf"], center_fusion_field(np.full((1, 1, 1, 1), 0.5), channels, k)[0, :, 0, 0])
    return nets


def smoothed(values, window: int = 20) -> np.ndarray:
    """Trailing moving average (shorter windows at the start)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return v
    c = np.cumsum(np.insert(v, 0, 0.0))
    idx = np.arange(1, v.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def write_loss_csv(path, losses) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "loss"])
        for i, v in enumerate(losses):
            w.writerow([i, repr(float(v))])
    return path


class _Batches:
    """Deterministic (targets, masks) batches: iteration ``it`` of a stage
    depends only on (seed, stage tag, it)."""

    def __init__(self, dataset: np.ndarray, cfg: TrainConfig, tag: int):
        if len(dataset) == 0:
            raise ConfigError("training dataset is empty")
        if dataset.shape[2] != dataset.shape[3]:
            raise ConfigError("training images must be square")
        self.dataset = dataset
        self.cfg = cfg
        self.tag = tag
        self.masks = mask_bank(cfg.mask_bank_size, dataset.shape[2], cfg.seed)

    def __call__(self, it: int) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng([self.cfg.seed, self.tag, it])
        idx = rng.integers(len(self.dataset), size=self.cfg.batch_size)
        midx = rng.integers(len(self.masks), size=self.cfg.batch_size)
        return self.dataset[idx], self.masks[midx]


def _run_loop(
    net: Module,
    step_loss: Callable[[np.ndarray, np.ndarray], Tensor],
    batches: _Batches,
    iters: int,
    cfg: TrainConfig,
    name: str,
    on_checkpoint: Callable[[int], None] | None = None,
) -> list[float]:
    net.train()
    opt = Adam(net.parameters(), lr=cfg.learning_rate)
    losses: list[float] = []
    for it in range(iters):
        targets, masks = batches(it)
        opt.zero_grad()
        loss = step_loss(targets, masks)
        loss.backward()
        opt.step()
        losses.append(loss.item())
        if cfg.log_every and (it + 1) % cfg.log_every == 0:
            log.info("%s iter %d/%d loss %.5f", name, it + 1, iters, np.mean(losses[-cfg.log_every:]))
        if on_checkpoint and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            on_checkpoint(it + 1)
    net.eval()
    return losses


def train_stage1(pfunet: UNet, dataset: np.ndarray, cfg: TrainConfig, on_checkpoint=None) -> list[float]:
    """Fit the kernel predictor so the filtered corrupted image matches the
    ground truth under the L1 - lambda * SSIM loss. Returns per-iteration losses."""
    cfg.validate()
    batches = _Batches(dataset, cfg, tag=1)

    def step(targets, masks):
        i1, _, _ = pfunet_forward(pfunet, Tensor(corrupt_batch(targets, masks)))
        return loss_l1_ssim(i1, Tensor(targets), cfg.lambda_ssim)

    return _run_loop(pfunet, step, batches, cfg.stage1_iters, cfg, "stage1", on_checkpoint)


def train_generator(gen: UNet, dataset: np.ndarray, cfg: TrainConfig, on_checkpoint=None) -> list[float]:
    """Fit the toy generator on its composited output with the same loss."""
    cfg.validate()
    batches = _Batches(dataset, cfg, tag=2)

    def step(targets, masks):
        out = toy_generator_forward(gen, Tensor(corrupt_batch(targets, masks)), Tensor(masks[:, None]))
        return loss_l1_ssim(out, Tensor(targets), cfg.lambda_ssim)

    return _run_loop(gen, step, batches, cfg.gen_iters, cfg, "generator", on_checkpoint)


def train_stage2(
    uafnet: UNet,
    pfunet: UNet,
    generator: GeneratorLike,
    dataset: np.ndarray,
    cfg: TrainConfig,
    on_checkpoint=None,
) -> list[float]:
    """Fit the fusion network on top of a frozen kernel predictor and a
    frozen generator. Unfrozen inputs are rejected."""
    cfg.validate()
    if not pfunet.frozen:
        raise ConfigError("stage 2 needs a frozen kernel network; call .freeze() first")
    if isinstance(generator, Module) and not generator.frozen:
        raise ConfigError("stage 2 needs a frozen generator; call .freeze() first")
    pfunet.eval()
    if isinstance(generator, Module):
        generator.eval()
    batches = _Batches(dataset, cfg, tag=3)

    def step(targets, masks):
        x = Tensor(corrupt_batch(targets, masks))
        with no_grad():
            i1, kernels, u = pfunet_forward(pfunet, x)
            i2 = run_generator(generator, x, Tensor(masks[:, None]))
        fused, _ = uafnet_forward(uafnet, u, kernels, i1, i2)
        return loss_l1_ssim(fused, Tensor(targets), cfg.lambda_ssim)

    return _run_loop(uafnet, step, batches, cfg.stage2_iters, cfg, "stage2", on_checkpoint)


def checkpoint_meta(net: UNet, cfg: TrainConfig, stage: str, extra: dict | None = None) -> dict:
    meta = {"stage": stage, "net_config": net.cfg.to_dict(), "train_config": cfg.to_dict()}
    if extra:
        meta.update(extra)
    return meta


def save_net(path, net: UNet, cfg: TrainConfig, stage: str, extra: dict | None = None) -> Path:
    return save_checkpoint(path, {stage: net}, checkpoint_meta(net, cfg, stage, extra))
