"""PSNR/SSIM evaluation per hole-ratio bucket, and difference maps."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autograd import no_grad
from .errors import ConfigError, ShapeError
from .losses import ssim
from .masks import classify_mask_ratio

METHODS = ("input", "filtering", "naive_fusion", "smart_fusion", "generator")


def psnr(x, y) -> float:
    """10 log10(1 / MSE) on unit-range images; ``inf`` when identical."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"image shapes differ: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def difference_map(pred, target) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel mean absolute channel difference of H x W x C images.

    Returns (stretched, raw): ``raw`` is the H x W map itself, ``stretched``
    is min-max scaled to [0, 1] for display (all zeros when flat).
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"image shapes differ: {pred.shape} vs {target.shape}")
    raw = np.abs(pred - target)
    raw = raw.mean(axis=2) if raw.ndim == 3 else raw
    lo, hi = raw.min(), raw.max()
    stretched = (raw - lo) / (hi - lo) if hi > lo else np.zeros_like(raw)
    return stretched, raw


@dataclass
class EvalRow:
    method: str
    bucket: str
    psnr: float
    ssim: float
    n: int
    n_inf: int


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    total: int = 0

    def get(self, method: str, bucket: str) -> EvalRow:
        for r in self.rows:
            if r.method == method and r.bucket == bucket:
                return r
        raise KeyError((method, bucket))

    @property
    def buckets(self) -> list[str]:
        return list(dict.fromkeys(r.bucket for r in self.rows))

    @property
    def methods(self) -> list[str]:
        return list(dict.fromkeys(r.method for r in self.rows))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "bucket", "psnr", "ssim", "n", "n_inf"])
        for r in self.rows:
            w.writerow([r.method, r.bucket, f"{r.psnr:.4f}", f"{r.ssim:.6f}", r.n, r.n_inf])
        return buf.getvalue()

    def to_table(self) -> str:
        buckets = self.buckets
        head = f"{'method':<14}" + "".join(f"{b + ' PSNR':>12}{b + ' SSIM':>11}" for b in buckets)
        lines = [head, "-" * len(head)]
        for m in self.methods:
            cells = "".join(f"{self.get(m, b).psnr:>12.3f}{self.get(m, b).ssim:>11.4f}" for b in buckets)
            lines.append(f"{m:<14}{cells}")
        return "\n".join(lines)


def evaluate(
    run: Callable[[np.ndarray, np.ndarray], dict[str, np.ndarray]],
    images: np.ndarray,
    masks: np.ndarray,
    buckets: list[str] | None = None,
    batch_size: int = 16,
) -> EvalReport:
    """Score every method returned by ``run`` on (image, mask) pairs.

    ``run(targets, masks)`` receives N x C x H x W ground truth and N x H x W
    masks and returns a dict of N x C x H x W outputs keyed by method name.
    Pairs are grouped by the bucket of their mask; infinite PSNRs are left
    out of the mean and counted in ``n_inf``.
    """
    if len(images) != len(masks):
        raise ShapeError("need exactly one mask per image")
    if len(images) == 0:
        raise ConfigError("nothing to evaluate")
    labels = [classify_mask_ratio(m) for m in masks]
    wanted = buckets or list(dict.fromkeys(labels))
    empty = [b for b in wanted if b not in labels]
    if empty:
        raise ConfigError(f"bucket(s) {', '.join(empty)} received no samples")
    scores: dict[tuple[str, str], list[tuple[float, float]]] = {}
    with no_grad():
        for start in range(0, len(images), batch_size):
            tb = images[start:start + batch_size]
            mb = masks[start:start + batch_size]
            outs = run(tb, mb)
            for name, out in outs.items():
                for i in range(len(tb)):
                    bucket = labels[start + i]
                    if bucket not in wanted:
                        continue
                    p = psnr(out[i], tb[i])
                    s = ssim(out[i:i + 1], tb[i:i + 1]).item()
                    scores.setdefault((name, bucket), []).append((p, s))
    report = EvalReport(total=len(images))
    methods = list(dict.fromkeys(name for name, _ in scores))
    for m in methods:
        for b in wanted:
            vals = scores.get((m, b), [])
            if not vals:
                raise ConfigError(f"bucket {b} received no samples")
            finite = [p for p, _ in vals if math.isfinite(p)]
            report.rows.append(
                EvalRow(
                    method=m,
                    bucket=b,
                    psnr=float(np.mean(finite)) if finite else math.inf,
                    ssim=float(np.mean([s for _, s in vals])),
                    n=len(vals),
                    n_inf=len(vals) - len(finite),
                )
            )
    return report
