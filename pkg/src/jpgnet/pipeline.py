"""Full inference path: filter branch, generator branch, both fusions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .autograd import Tensor, no_grad
from .data import corrupt_batch
from .filtering import naive_fuse
from .layers import Module
from .networks import UNet, classical_fill_generator, pfunet_forward, toy_generator_forward, uafnet_forward

GeneratorLike = Union[UNet, Callable[[Tensor, Tensor], Tensor]]


def run_generator(gen: GeneratorLike, img, mask) -> Tensor:
    """Any generator branch: a trained UNet or a plain (img, mask) callable."""
    if isinstance(gen, UNet):
        return toy_generator_forward(gen, img, mask)
    return gen(img, mask)


def diffusion_generator(iterations: int = 500) -> Callable:
    def gen(img, mask):
        return classical_fill_generator(img, mask, iterations)

    return gen


@dataclass
class Pipeline:
    pfunet: UNet
    generator: GeneratorLike
    uafnet: UNet | None = None

    def eval(self) -> "Pipeline":
        for net in (self.pfunet, self.generator, self.uafnet):
            if isinstance(net, Module):
                net.eval()
        return self

    def infer(self, corrupted: np.ndarray, masks: np.ndarray) -> dict[str, np.ndarray]:
        """All outputs and intermediates for N x C x H x W corrupted inputs."""
        with no_grad():
            x = Tensor(corrupted)
            m = Tensor(np.asarray(masks, dtype=np.float64)[:, None])
            i1, kernels, u = pfunet_forward(self.pfunet, x)
            i2 = run_generator(self.generator, x, m)
            out = {
                "input": corrupted,
                "filtering": i1.data,
                "generator": i2.data,
                "naive_fusion": naive_fuse(i1, i2, u).data,
                "uncertainty": u.data,
                "kernels": kernels.data,
            }
            if self.uafnet is not None:
                fused, field = uafnet_forward(self.uafnet, u, kernels, i1, i2)
                out["smart_fusion"] = fused.data
                out["fusion_field"] = field.data
        return out

    def run(self, targets: np.ndarray, masks: np.ndarray) -> dict[str, np.ndarray]:
        """Corrupt ground truth with the masks and return the image outputs
        of every method (for ``metrics.evaluate``)."""
        out = self.infer(corrupt_batch(targets, masks), masks)
        keys = ("input", "filtering", "naive_fusion", "smart_fusion", "generator")
        return {k: out[k] for k in keys if k in out}
