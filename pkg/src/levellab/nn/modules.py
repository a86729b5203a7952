"""Parameterized layers over the Tensor autodiff core.

Modules own named parameter Tensors. ``parameters()`` walks attributes
recursively (submodules and lists of submodules included), producing the
dotted names used by checkpoints and the optimizer. All initialization
draws from an explicit numpy Generator so model builds are reproducible.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, affine, concat

DTYPE = np.float32


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


class Module:
    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                out[name] = value
            elif isinstance(value, Module):
                for sub, t in value.parameters().items():
                    out[f"{name}.{sub}"] = t
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        for sub, t in item.parameters().items():
                            out[f"{name}.{i}.{sub}"] = t
        return out

    def zero_grad(self):
        for t in self.parameters().values():
            t.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for k, t in params.items():
            arr = np.asarray(state[k], dtype=t.data.dtype)
            if arr.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {k}: {arr.shape} vs {t.data.shape}")
            t.data = arr.copy()


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.w = Tensor(_uniform(rng, (in_features, out_features), in_features),
                        requires_grad=True)
        self.b = Tensor(_uniform(rng, (out_features,), in_features), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return affine(x, self.w, self.b)


class Conv2d(Module):
    """Stride-1, padding-preserving convolution (odd square kernels)."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator):
        fan_in = in_channels * kernel_size * kernel_size
        self.w = Tensor(_uniform(rng, (out_channels, in_channels, kernel_size, kernel_size),
                                 fan_in), requires_grad=True)
        self.b = Tensor(_uniform(rng, (out_channels,), fan_in), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        from .tensor import conv2d
        return conv2d(x, self.w, self.b)


class LSTMCell(Module):
    """Single LSTM step. Gate order i, f, g, o; forget bias starts at 1."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.hidden_size = hidden_size
        self.wx = Tensor(_uniform(rng, (input_size, 4 * hidden_size), input_size),
                         requires_grad=True)
        self.wh = Tensor(_uniform(rng, (hidden_size, 4 * hidden_size), hidden_size),
                         requires_grad=True)
        bias = _uniform(rng, (4 * hidden_size,), hidden_size)
        bias[hidden_size:2 * hidden_size] += 1.0
        self.b = Tensor(bias, requires_grad=True)

    def __call__(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        hs = self.hidden_size
        gates = x @ self.wx + h @ self.wh + self.b
        i = gates[:, 0 * hs:1 * hs].sigmoid()
        f = gates[:, 1 * hs:2 * hs].sigmoid()
        g = gates[:, 2 * hs:3 * hs].tanh()
        o = gates[:, 3 * hs:4 * hs].sigmoid()
        c_new = f * c + i * g
        h_new = o * c_new.tanh()
        return h_new, c_new


class GRUCell(Module):
    """Single GRU step with separate input/hidden biases."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.hidden_size = hidden_size
        self.wx = Tensor(_uniform(rng, (input_size, 3 * hidden_size), input_size),
                         requires_grad=True)
        self.wh = Tensor(_uniform(rng, (hidden_size, 3 * hidden_size), hidden_size),
                         requires_grad=True)
        self.bx = Tensor(_uniform(rng, (3 * hidden_size,), input_size), requires_grad=True)
        self.bh = Tensor(_uniform(rng, (3 * hidden_size,), hidden_size), requires_grad=True)

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        hs = self.hidden_size
        gx = x @ self.wx + self.bx
        gh = h @ self.wh + self.bh
        r = (gx[:, :hs] + gh[:, :hs]).sigmoid()
        z = (gx[:, hs:2 * hs] + gh[:, hs:2 * hs]).sigmoid()
        n = (gx[:, 2 * hs:] + r * gh[:, 2 * hs:]).tanh()
        return (1.0 - z) * n + z * h
