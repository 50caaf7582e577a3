"""Minimal module system: parameter registration, train/eval, freezing."""

from __future__ import annotations

import hashlib
from typing import Iterator

import numpy as np

from . import functional as F
from .autograd import Tensor


class Module:
    def __init__(self) -> None:
        self.training = True

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.name == "param":
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in getattr(self, "_buffers", ()):
            yield prefix + name, getattr(self, name)
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(dict(self.named_buffers()))
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        bufs = dict(self.named_buffers())
        missing = (set(own) | set(bufs)) - set(state)
        if missing:
            raise KeyError(f"state is missing entries: {sorted(missing)[:5]}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.data.shape}")
            p.data = arr.copy()
        for name, buf in bufs.items():
            buf[...] = state[name]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def freeze(self) -> "Module":
        for p in self.parameters():
            p.requires_grad = False
            p.grad = None
        return self.eval()

    @property
    def frozen(self) -> bool:
        return all(not p.requires_grad for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_hash(self) -> str:
        h = hashlib.sha256()
        for name, arr in sorted(self.state_dict().items()):
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return h.hexdigest()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True, name="param")


class Conv2d(Module):
    """Conv with Kaiming-uniform (fan-in, ReLU gain) init and zero bias."""

    def __init__(self, cin, cout, k=3, stride=1, bias=True, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = np.sqrt(6.0 / (cin * k * k))
        self.stride = stride
        self.weight = parameter(rng.uniform(-bound, bound, size=(cout, cin, k, k)))
        self.bias = parameter(np.zeros(cout)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride)


class BatchNorm2d(Module):
    _buffers = ("running_mean", "running_var")

    def __init__(self, c, eps=1e-5, momentum=0.1, per_instance=False):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.per_instance = per_instance
        self.gamma = parameter(np.ones(c))
        self.beta = parameter(np.zeros(c))
        self.running_mean = np.zeros(c)
        self.running_var = np.ones(c)

    def forward(self, x: Tensor) -> Tensor:
        return F.batchnorm(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            training=self.training,
            momentum=self.momentum,
            eps=self.eps,
            per_instance=self.per_instance,
        )


class ConvBNAct(Module):
    def __init__(self, cin, cout, stride=1, activation="relu", slope=0.01, norm="batch", rng=None):
        super().__init__()
        self.conv = Conv2d(cin, cout, 3, stride=stride, bias=False, rng=rng)
        self.bn = BatchNorm2d(cout, per_instance=(norm == "instance"))
        self.activation = activation
        self.slope = slope

    def forward(self, x: Tensor) -> Tensor:
        y = self.bn(self.conv(x))
        if self.activation == "leaky_relu":
            return F.leaky_relu(y, self.slope)
        return F.relu(y)
