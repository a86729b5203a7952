"""Optimization utilities: Adam with bias correction, global-norm clipping."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def clip_global_norm(params: dict[str, Tensor], max_norm: float) -> float:
    """Rescale all gradients when their joint L2 norm exceeds ``max_norm``.

    Returns the pre-clip norm for logging. Parameters without gradients
    are ignored.
    """
    total = 0.0
    grads = [p.grad for p in params.values() if p.grad is not None]
    for g in grads:
        total += float((g.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


class Adam:
    """Adam with bias-corrected moment estimates.

    update = lr * m_hat / (sqrt(v_hat) + eps), applied in place to the
    parameter arrays.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-5):
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            m_hat = self.m[k] / c1
            v_hat = self.v[k] / c2
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {"__step__": np.array([self.t], dtype=np.int64)}
        for k in self.params:
            out[f"{k}.m"] = self.m[k].copy()
            out[f"{k}.v"] = self.v[k].copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]):
        self.t = int(state["__step__"][0])
        for k in self.params:
            self.m[k] = np.asarray(state[f"{k}.m"]).copy()
            self.v[k] = np.asarray(state[f"{k}.v"]).copy()
