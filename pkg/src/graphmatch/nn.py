"""Minimal layer/module system on top of the autodiff tensor.

Modules expose ``named_parameters()`` (trainable tensors) and
``named_buffers()`` (non-trainable state such as batch-norm running
statistics); both together form the checkpointable state. Attribute
names become dotted state names, so layout here fixes the on-disk
checkpoint naming.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor


def he_normal(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    """Fan-in scaled normal init: std = sqrt(2 / fan_in)."""
    std = np.sqrt(2.0 / fan_in)
    return (rng.standard_normal(shape) * std).astype(dtype)


class Module:
    def __init__(self):
        self.training = True

    def _items(self):
        for name, value in vars(self).items():
            if not name.startswith("_"):
                yield name, value

    def named_parameters(self, prefix: str = ""):
        for name, value in self._items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")

    def named_buffers(self, prefix: str = ""):
        for name, value in self._items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and not value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_buffers(full + ".")

    def named_state(self, prefix: str = ""):
        """Parameters followed by buffers, in stable traversal order."""
        yield from self.named_parameters(prefix)
        yield from self.named_buffers(prefix)

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def train(self, mode: bool = True):
        self.training = mode
        for _, value in self._items():
            if isinstance(value, Module):
                value.train(mode)
        return self

    def eval(self):
        return self.train(False)


class Linear(Module):
    """Affine map y = x @ W.T + b with W of shape (out, in)."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.weight = Tensor(he_normal(rng, (out_features, in_features), in_features, dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return T.matmul(x, self.weight.T) + self.bias

    __call__ = forward


class TwoLayerMlp(Module):
    """Linear -> ReLU -> Linear."""

    def __init__(self, in_features: int, hidden: int, out_features: int, rng, dtype=np.float32):
        super().__init__()
        self.fc1 = Linear(in_features, hidden, rng, dtype)
        self.fc2 = Linear(hidden, out_features, rng, dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).relu())

    __call__ = forward


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, stride: int, padding: int,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Tensor(
            he_normal(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in, dtype),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)
        self._stride = stride
        self._padding = padding

    def forward(self, x: Tensor) -> Tensor:
        out = T.conv2d(x, self.weight, stride=self._stride, padding=self._padding)
        return out + self.bias.reshape(1, -1, 1, 1)

    __call__ = forward


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = Tensor(np.zeros(channels, dtype=dtype))
        self.running_var = Tensor(np.ones(channels, dtype=dtype))
        self._momentum = momentum
        self._eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return T.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            momentum=self._momentum, eps=self._eps, training=self.training,
        )

    __call__ = forward


def load_state(module: Module, state: dict[str, np.ndarray]):
    """Copy arrays into a module's named state; names and shapes must match exactly."""
    own = dict(module.named_state())
    missing = sorted(set(own) - set(state))
    extra = sorted(set(state) - set(own))
    if missing or extra:
        raise ShapeError(f"state mismatch: missing={missing} unexpected={extra}")
    for name, tens in own.items():
        arr = state[name]
        if tuple(arr.shape) != tuple(tens.data.shape):
            raise ShapeError(f"shape mismatch for {name}: {arr.shape} vs {tens.data.shape}")
        tens.data[...] = arr.astype(tens.data.dtype, copy=False)
