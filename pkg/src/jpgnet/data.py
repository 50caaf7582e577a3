"""Procedural toy images, corruption with a hole mask, and on-disk datasets."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, IOFormatError, ShapeError
from .imageio import load_image, save_image
from .masks import BUCKETS, Mask, generate_irregular_mask

FILL_VALUE = 1.0
MANIFEST = "manifest.txt"


@dataclass
class Sample:
    """Ground truth, hole mask (1 = missing) and the corrupted input, all
    H x W x C except the H x W mask."""

    target: np.ndarray
    mask: np.ndarray
    corrupted: np.ndarray


def corrupt(target: np.ndarray, mask) -> Sample:
    """Set masked pixels to ``FILL_VALUE`` and copy the rest."""
    target = np.asarray(target, dtype=np.float64)
    m = np.asarray(mask.data if isinstance(mask, Mask) else mask)
    if target.ndim == 2:
        target = target[:, :, None]
    if m.shape != target.shape[:2]:
        raise ShapeError(f"mask {m.shape} does not match image {target.shape[:2]}")
    hole = m.astype(bool)[:, :, None]
    corrupted = np.where(hole, FILL_VALUE, target)
    return Sample(target, m.astype(np.uint8), corrupted)


def corrupt_batch(targets: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """N x C x H x W targets with N x H x W masks -> corrupted inputs."""
    if masks.shape != (targets.shape[0],) + targets.shape[2:]:
        raise ShapeError(f"masks {masks.shape} do not match images {targets.shape}")
    return np.where(masks[:, None].astype(bool), FILL_VALUE, targets)


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    t = (np.arange(size) + 0.5) / size
    return np.meshgrid(t, t, indexing="ij")


def toy_image(size: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth colour gradient, a sinusoidal texture and a few ellipses."""
    yy, xx = _grid(size)
    c0, c1 = rng.uniform(0.1, 0.9, size=(2, 3))
    angle = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(angle) * (xx - 0.5) + np.sin(angle) * (yy - 0.5)) + 0.5
    img = c0 + (c1 - c0) * np.clip(ramp, 0, 1)[:, :, None]

    freq = rng.uniform(2.0, 8.0)
    tangle = rng.uniform(0, np.pi)
    phase = rng.uniform(0, 2 * np.pi)
    wave = np.sin(2 * np.pi * freq * (np.cos(tangle) * xx + np.sin(tangle) * yy) + phase)
    img = img + rng.uniform(0.03, 0.12) * wave[:, :, None] * rng.uniform(0.5, 1.0, size=3)

    for _ in range(int(rng.integers(1, 5))):
        cy, cx = rng.uniform(0.1, 0.9, size=2)
        ry, rx = rng.uniform(0.06, 0.3, size=2)
        rot = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = (np.cos(rot) * dx + np.sin(rot) * dy) / rx
        v = (-np.sin(rot) * dx + np.cos(rot) * dy) / ry
        inside = (u * u + v * v) <= 1.0
        img = np.where(inside[:, :, None], rng.uniform(0.0, 1.0, size=3), img)
    return np.clip(img, 0.0, 1.0)


def toy_dataset(n: int, size: int, rng: np.random.Generator | int) -> np.ndarray:
    """``n`` procedural images as an n x 3 x size x size array in [0, 1]."""
    if n < 1:
        raise ConfigError("toy_dataset needs n >= 1")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    return np.stack([toy_image(size, rng).transpose(2, 0, 1) for _ in range(n)])


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Sample order for one pass; a pure function of (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def mask_bank(count: int, size: int, seed: int, buckets=tuple(BUCKETS)) -> np.ndarray:
    """``count`` masks cycling through ``buckets``, count x size x size."""
    rng = np.random.default_rng(seed)
    return np.stack(
        [generate_irregular_mask(size, size, buckets[i % len(buckets)], rng).data for i in range(count)]
    )


# -- datasets on disk ---------------------------------------------------------


def write_dataset(root, images: np.ndarray, ext: str = ".png") -> list[Path]:
    """Write N x C x H x W images and a manifest of relative paths."""
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFormatError(f"cannot create {root}: {exc}") from exc
    width = max(4, len(str(len(images) - 1)))
    names = []
    for i, img in enumerate(images):
        name = f"img_{i:0{width}d}{ext}"
        save_image(root / name, img.transpose(1, 2, 0))
        names.append(name)
    try:
        (root / MANIFEST).write_text("".join(n + "\n" for n in names))
    except OSError as exc:
        raise IOFormatError(f"cannot write manifest in {root}: {exc}") from exc
    return [root / n for n in names]


def read_manifest(root) -> list[Path]:
    root = Path(root)
    path = root / MANIFEST if root.is_dir() else root
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise IOFormatError(f"cannot read manifest {path}: {exc}") from exc
    return [path.parent / line.strip() for line in lines if line.strip()]


def load_dataset(root) -> np.ndarray:
    """Load every image listed in the manifest as N x C x H x W."""
    paths = read_manifest(root)
    if not paths:
        raise ConfigError(f"dataset {root} is empty")
    imgs = [load_image(p) for p in paths]
    shapes = {im.shape for im in imgs}
    if len(shapes) != 1:
        raise ShapeError(f"dataset images differ in shape: {sorted(shapes)}")
    return np.stack([im.transpose(2, 0, 1) for im in imgs])
