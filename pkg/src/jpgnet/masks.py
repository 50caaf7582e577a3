"""Irregular brush-stroke hole masks and hole-ratio buckets.

A mask is an H x W binary map with 1 marking a missing pixel. Buckets are
half-open on the left: B20 = (0, 0.2], B40 = (0.2, 0.4], B60 = (0.4, 0.6].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, MaskGenerationError

BUCKETS: dict[str, tuple[float, float]] = {
    "B20": (0.0, 0.2),
    "B40": (0.2, 0.4),
    "B60": (0.4, 0.6),
}
OUT_OF_PROTOCOL = "out-of-protocol"
MAX_TRIES = 100


def classify_ratio(ratio: float) -> str:
    for name, (lo, hi) in BUCKETS.items():
        if lo < ratio <= hi:
            return name
    return OUT_OF_PROTOCOL


def classify_mask_ratio(mask) -> str:
    m = mask.data if isinstance(mask, Mask) else np.asarray(mask)
    if m.size == 0:
        return OUT_OF_PROTOCOL
    if not np.isin(m, (0, 1)).all():
        raise ConfigError("mask must be binary")
    return classify_ratio(np.count_nonzero(m) / m.size)


@dataclass(frozen=True)
class Mask:
    data: np.ndarray

    @property
    def ratio(self) -> float:
        return np.count_nonzero(self.data) / self.data.size

    @property
    def bucket(self) -> str:
        return classify_ratio(self.ratio)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def _draw_segment(canvas: np.ndarray, p0, p1, radius: float) -> None:
    h, w = canvas.shape
    y0 = max(int(np.floor(min(p0[0], p1[0]) - radius)), 0)
    y1 = min(int(np.ceil(max(p0[0], p1[0]) + radius)) + 1, h)
    x0 = max(int(np.floor(min(p0[1], p1[1]) - radius)), 0)
    x1 = min(int(np.ceil(max(p0[1], p1[1]) + radius)) + 1, w)
    if y0 >= y1 or x0 >= x1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    d = np.array(p1, float) - np.array(p0, float)
    len2 = float(d @ d)
    if len2 == 0.0:
        t = np.zeros(yy.shape)
    else:
        t = np.clip(((yy - p0[0]) * d[0] + (xx - p0[1]) * d[1]) / len2, 0.0, 1.0)
    dist2 = (yy - p0[0] - t * d[0]) ** 2 + (xx - p0[1] - t * d[1]) ** 2
    canvas[y0:y1, x0:x1] |= dist2 <= radius * radius


def random_stroke(h: int, w: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """One random-walk brush stroke, thickness 1 .. size/8 pixels."""
    size = min(h, w)
    canvas = np.zeros((h, w), dtype=bool)
    max_thick = max(1, size // 8)
    thickness = rng.integers(1, max_thick + 1) * max(scale, 1.0 / max_thick)
    radius = max(thickness, 1.0) / 2.0
    n_vertices = int(rng.integers(3, 9))
    p = np.array([rng.uniform(0, h), rng.uniform(0, w)])
    angle = rng.uniform(0, 2 * np.pi)
    for _ in range(n_vertices):
        angle += rng.normal(0.0, 0.8)
        length = rng.uniform(size / 16, size / 4) * max(scale, 0.25)
        q = p + length * np.array([np.sin(angle), np.cos(angle)])
        q = np.clip(q, 0, [h - 1, w - 1])
        _draw_segment(canvas, p, q, radius)
        p = q
    return canvas


def generate_irregular_mask(h: int, w: int, target_bucket: str, rng: np.random.Generator) -> Mask:
    """Draw strokes until the hole ratio reaches a target drawn uniformly
    inside the bucket.

    A stroke that would overshoot the bucket is discarded and redrawn
    smaller. After 10 discards a mask already inside the bucket is accepted
    as is; after ``MAX_TRIES`` discards generation fails.
    """
    if target_bucket not in BUCKETS:
        raise ConfigError(f"unknown bucket {target_bucket!r}; choose from {', '.join(BUCKETS)}")
    lo, hi = BUCKETS[target_bucket]
    total = h * w
    target = rng.uniform(lo, hi)
    canvas = np.zeros((h, w), dtype=bool)
    count = 0
    rejected = 0
    scale = 1.0
    while True:
        stroke = random_stroke(h, w, rng, scale)
        merged = canvas | stroke
        n = int(np.count_nonzero(merged))
        if n / total > hi:
            rejected += 1
            if count / total > lo and rejected >= 10:
                # already inside the bucket, just short of the drawn target
                return Mask(canvas.astype(np.uint8))
            if rejected >= MAX_TRIES:
                raise MaskGenerationError(
                    f"could not reach bucket {target_bucket} after {MAX_TRIES} rejected strokes"
                )
            scale *= 0.8
            continue
        canvas = merged
        count = n
        if count / total >= target and count / total > lo:
            return Mask(canvas.astype(np.uint8))
