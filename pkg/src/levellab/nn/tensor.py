"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray together with a gradient buffer and a closure
that propagates incoming gradients to its parents. ``backward()`` walks
the graph in reverse topological order (iteratively; unrolled recurrent
graphs get deep). Gradients accumulate, so call ``zero_grad`` between
uses.

Dtypes pass through: float32 graphs stay float32, float64 graphs stay
float64. That keeps training cheap while letting finite-difference
checks run at full precision.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

DEFAULT_DTYPE = np.float32

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph construction inside the block (rollouts, eval)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(DEFAULT_DTYPE)
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    # --- bookkeeping -----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self, grad=None):
        """Backpropagate from this tensor.

        Without an explicit ``grad`` the tensor must hold a single value.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)

        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # --- graph construction ----------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents: tuple, backward) -> "Tensor":
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(p for p in parents if p.requires_grad)
            out._backward = backward
        return out

    # --- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, self.dtype))
        a, b = self, other

        def back(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))
        return Tensor._make(a.data + b.data, (a, b), back)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def back(g):
            a._accumulate(-g)
        return Tensor._make(-a.data, (a,), back)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Tensor) else Tensor(np.asarray(-other, self.dtype)))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, self.dtype))
        a, b = self, other

        def back(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape))
        return Tensor._make(a.data * b.data, (a, b), back)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, self.dtype))
        a, b = self, other

        def back(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))
        return Tensor._make(a.data / b.data, (a, b), back)

    def __pow__(self, exponent: float):
        a = self
        e = float(exponent)

        def back(g):
            a._accumulate(g * e * a.data ** (e - 1.0))
        return Tensor._make(a.data ** e, (a,), back)

    def __matmul__(self, other):
        a, b = self, other

        def back(g):
            if a.requires_grad:
                a._accumulate(g @ b.data.swapaxes(-1, -2))
            if b.requires_grad:
                gb = a.data.swapaxes(-1, -2) @ g
                b._accumulate(_unbroadcast(gb, b.shape))
        return Tensor._make(a.data @ b.data, (a, b), back)

    def __getitem__(self, idx):
        a = self

        def back(g):
            buf = np.zeros_like(a.data)
            np.add.at(buf, idx, g)
            a._accumulate(buf)
        return Tensor._make(a.data[idx], (a,), back)

    # --- elementwise nonlinearities ----------------------------------------

    def tanh(self):
        a = self
        y = np.tanh(a.data)

        def back(g):
            a._accumulate(g * (1.0 - y * y))
        return Tensor._make(y, (a,), back)

    def sigmoid(self):
        a = self
        y = 1.0 / (1.0 + np.exp(-a.data))

        def back(g):
            a._accumulate(g * y * (1.0 - y))
        return Tensor._make(y, (a,), back)

    def relu(self):
        a = self
        mask = a.data > 0

        def back(g):
            a._accumulate(g * mask)
        # np.maximum (not where) so NaN propagates instead of flushing to 0
        return Tensor._make(np.maximum(a.data, 0), (a,), back)

    def exp(self):
        a = self
        y = np.exp(a.data)

        def back(g):
            a._accumulate(g * y)
        return Tensor._make(y, (a,), back)

    def log(self):
        a = self

        def back(g):
            a._accumulate(g / a.data)
        return Tensor._make(np.log(a.data), (a,), back)

    # --- reductions and shaping ---------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        a = self

        def back(g):
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.shape).copy())
                return
            gg = g
            if not keepdims:
                gg = np.expand_dims(gg, axis)
            a._accumulate(np.broadcast_to(gg, a.shape).copy())
        return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), back)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            n = self.data.size
        elif isinstance(axis, tuple):
            n = int(np.prod([self.data.shape[a] for a in axis]))
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        old = a.shape

        def back(g):
            a._accumulate(g.reshape(old))
        return Tensor._make(a.data.reshape(shape), (a,), back)

    def transpose(self, *axes):
        a = self
        axes = axes or None
        inv = np.argsort(axes) if axes else None

        def back(g):
            a._accumulate(g.transpose(inv) if inv is not None else g.transpose())
        return Tensor._make(a.data.transpose(axes) if axes else a.data.transpose(), (a,), back)


def _select_grad(a: Tensor, b: Tensor, take_a: np.ndarray, tie: np.ndarray):
    wa = take_a + 0.5 * tie
    wb = (~take_a & ~tie) + 0.5 * tie

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * wa, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * wb, b.shape))
    return back


def maximum(a: Tensor, b) -> Tensor:
    """Elementwise max; gradient follows the winning side (ties split)."""
    b = b if isinstance(b, Tensor) else Tensor(np.asarray(b, a.dtype))
    back = _select_grad(a, b, a.data > b.data, a.data == b.data)
    return Tensor._make(np.maximum(a.data, b.data), (a, b), back)


def minimum(a: Tensor, b) -> Tensor:
    b = b if isinstance(b, Tensor) else Tensor(np.asarray(b, a.dtype))
    back = _select_grad(a, b, a.data < b.data, a.data == b.data)
    return Tensor._make(np.minimum(a.data, b.data), (a, b), back)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    return minimum(maximum(x, lo), hi)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(a, b)
                t._accumulate(g[tuple(sl)])
    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis),
                        tuple(tensors), back)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)

    def back(g):
        slabs = np.moveaxis(g, axis, 0)
        for t, slab in zip(tensors, slabs):
            if t.requires_grad:
                t._accumulate(slab)
    return Tensor._make(np.stack([t.data for t in tensors], axis=axis),
                        tuple(tensors), back)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with bias broadcast over leading axes."""
    return x @ w + b


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable log softmax along ``axis``."""
    a = x
    shift = a.data - a.data.max(axis=axis, keepdims=True)
    ex = np.exp(shift)
    y = shift - np.log(ex.sum(axis=axis, keepdims=True))
    soft = ex / ex.sum(axis=axis, keepdims=True)

    def back(g):
        a._accumulate(g - soft * g.sum(axis=axis, keepdims=True))
    return Tensor._make(y, (a,), back)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return log_softmax(x, axis).exp()


def gather(x: Tensor, index: np.ndarray, axis: int = -1) -> Tensor:
    """Pick one entry per row along ``axis`` (log-prob lookup and friends)."""
    index = np.asarray(index)
    idx = np.expand_dims(index, axis)
    a = x

    def back(g):
        buf = np.zeros_like(a.data)
        np.put_along_axis(buf, idx, np.expand_dims(g, axis), axis)
        a._accumulate(buf)
    out = np.take_along_axis(a.data, idx, axis).squeeze(axis)
    return Tensor._make(out, (a,), back)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """2D convolution, stride 1, zero padding to keep spatial size.

    ``x`` is (N, C, H, W), ``w`` is (O, C, kh, kw) with odd kernel sides,
    bias is (O,). Implemented as an im2col matmul; the backward pass
    scatters through the same window geometry.
    """
    n, c, h, wd = x.shape
    o, c2, kh, kw = w.shape
    if c2 != c:
        raise ValueError(f"channel mismatch: input {c}, kernel {c2}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("conv2d expects odd kernel sides")
    ph, pw = kh // 2, kw // 2

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, c * kh * kw)
    wmat = w.data.reshape(o, c * kh * kw)
    out = (cols @ wmat.T).reshape(n, h, wd, o).transpose(0, 3, 1, 2)
    if b is not None:
        out = out + b.data.reshape(1, o, 1, 1)

    xt, wt, bt = x, w, b

    def back(g):
        gf = g.transpose(0, 2, 3, 1).reshape(n * h * wd, o)
        if wt.requires_grad:
            wt._accumulate((gf.T @ cols).reshape(o, c, kh, kw))
        if bt is not None and bt.requires_grad:
            bt._accumulate(g.sum(axis=(0, 2, 3)))
        if xt.requires_grad:
            dcols = (gf @ wmat).reshape(n, h, wd, c, kh, kw)
            dxp = np.zeros_like(xp)
            for di in range(kh):
                for dj in range(kw):
                    dxp[:, :, di:di + h, dj:dj + wd] += dcols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
            xt._accumulate(dxp[:, :, ph:ph + h, pw:pw + wd])

    parents = (xt, wt) if bt is None else (xt, wt, bt)
    return Tensor._make(out, parents, back)
