"""Minimal reverse-mode autodiff on numpy arrays.

A Tensor wraps a float64 ndarray and records its parents with per-parent
gradient closures; ``backward()`` runs the tape in reverse topological
order.  Only the ops the networks here need are implemented.  Gradients are
exact (checked against central finite differences in the test suite).
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverses numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents")

    def __init__(self, data, requires_grad: bool = False, _parents=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p, _ in _parents)
        self._parents = _parents

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor{self.data.shape}"

    # -- graph plumbing -------------------------------------------------
    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        topo, seen = [], set()

        def visit(t):
            if id(t) in seen or not t.requires_grad:
                return
            seen.add(id(t))
            for p, _ in t._parents:
                visit(p)
            topo.append(t)

        visit(self)
        grads = {id(self): np.ones_like(self.data)}
        for t in reversed(topo):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            if not t._parents:
                t.grad = g if t.grad is None else t.grad + g
                continue
            for p, fn in t._parents:
                if not p.requires_grad:
                    continue
                pg = fn(g)
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                elif p._parents:
                    grads[id(p)] = pg
                else:
                    p.grad = pg if p.grad is None else p.grad + pg

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        o = _wrap(other)
        return Tensor(self.data + o.data, _parents=(
            (self, lambda g: _unbroadcast(g, self.data.shape)),
            (o, lambda g: _unbroadcast(g, o.data.shape))))

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, _parents=((self, lambda g: -g),))

    def __sub__(self, other):
        return self + (-_wrap(other))

    def __rsub__(self, other):
        return _wrap(other) + (-self)

    def __mul__(self, other):
        o = _wrap(other)
        return Tensor(self.data * o.data, _parents=(
            (self, lambda g: _unbroadcast(g * o.data, self.data.shape)),
            (o, lambda g: _unbroadcast(g * self.data, o.data.shape))))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = _wrap(other)
        return Tensor(self.data / o.data, _parents=(
            (self, lambda g: _unbroadcast(g / o.data, self.data.shape)),
            (o, lambda g: _unbroadcast(-g * self.data / (o.data * o.data),
                                       o.data.shape))))

    def __rtruediv__(self, other):
        return _wrap(other) / self

    def __pow__(self, exponent: float):
        e = float(exponent)
        return Tensor(self.data ** e, _parents=(
            (self, lambda g: g * e * self.data ** (e - 1.0)),))

    def __matmul__(self, other):
        o = _wrap(other)

        def g_self(g):
            return _unbroadcast(np.matmul(g, np.swapaxes(o.data, -1, -2)),
                                self.data.shape)

        def g_other(g):
            return _unbroadcast(np.matmul(np.swapaxes(self.data, -1, -2), g),
                                o.data.shape)

        return Tensor(np.matmul(self.data, o.data),
                      _parents=((self, g_self), (o, g_other)))

    # -- elementwise nonlinearities ---------------------------------------
    def exp(self):
        out_data = np.exp(self.data)
        return Tensor(out_data, _parents=((self, lambda g: g * out_data),))

    def log(self):
        return Tensor(np.log(self.data), _parents=((self, lambda g: g / self.data),))

    def tanh(self):
        out_data = np.tanh(self.data)
        return Tensor(out_data, _parents=(
            (self, lambda g: g * (1.0 - out_data * out_data)),))

    def elu(self):
        pos = self.data > 0.0
        ex = np.exp(np.minimum(self.data, 0.0))
        out_data = np.where(pos, self.data, ex - 1.0)
        return Tensor(out_data, _parents=(
            (self, lambda g: g * np.where(pos, 1.0, ex)),))

    def sqrt(self):
        out_data = np.sqrt(self.data)
        return Tensor(out_data, _parents=((self, lambda g: g * 0.5 / out_data),))

    def clip(self, lo: float, hi: float):
        inside = (self.data > lo) & (self.data < hi)
        return Tensor(np.clip(self.data, lo, hi), _parents=(
            (self, lambda g: g * inside),))

    def minimum(self, other):
        o = _wrap(other)
        take_self = self.data <= o.data
        return Tensor(np.minimum(self.data, o.data), _parents=(
            (self, lambda g: _unbroadcast(g * take_self, self.data.shape)),
            (o, lambda g: _unbroadcast(g * ~take_self, o.data.shape))))

    def maximum(self, other):
        o = _wrap(other)
        take_self = self.data >= o.data
        return Tensor(np.maximum(self.data, o.data), _parents=(
            (self, lambda g: _unbroadcast(g * take_self, self.data.shape)),
            (o, lambda g: _unbroadcast(g * ~take_self, o.data.shape))))

    # -- reductions and shape ops -----------------------------------------
    def sum(self, axis=None, keepdims: bool = False):
        def bw(g):
            if axis is None:
                return np.broadcast_to(g, self.data.shape).copy()
            gg = g if keepdims else np.expand_dims(g, axis)
            return np.broadcast_to(gg, self.data.shape).copy()
        return Tensor(self.data.sum(axis=axis, keepdims=keepdims),
                      _parents=((self, bw),))

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            n = self.data.size
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        old = self.data.shape
        return Tensor(self.data.reshape(*shape), _parents=(
            (self, lambda g: g.reshape(old)),))

    def swapaxes(self, a: int, b: int):
        return Tensor(np.swapaxes(self.data, a, b), _parents=(
            (self, lambda g: np.swapaxes(g, a, b)),))

    def __getitem__(self, key):
        def bw(g):
            out = np.zeros_like(self.data)
            out[key] = g
            return out
        return Tensor(self.data[key], _parents=((self, bw),))

    def take_rows(self, idx: np.ndarray):
        """Row gather (embedding lookup); backward scatter-adds."""
        idx = np.asarray(idx)

        def bw(g):
            out = np.zeros_like(self.data)
            np.add.at(out, idx, g)
            return out
        return Tensor(self.data[idx], _parents=((self, bw),))

    def softmax(self, axis: int = -1):
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out_data = e / e.sum(axis=axis, keepdims=True)

        def bw(g):
            dot = (g * out_data).sum(axis=axis, keepdims=True)
            return out_data * (g - dot)
        return Tensor(out_data, _parents=((self, bw),))


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors: list, axis: int = -1) -> Tensor:
    datas = [t.data for t in tensors]
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)
    parents = []
    for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
        def bw(g, start=start, stop=stop):
            sl = [slice(None)] * g.ndim
            sl[axis if axis >= 0 else g.ndim + axis] = slice(start, stop)
            return g[tuple(sl)]
        parents.append((t, bw))
    return Tensor(np.concatenate(datas, axis=axis), _parents=tuple(parents))


def param(data, rng: np.random.Generator | None = None, scale: float | None = None,
          shape=None) -> Tensor:
    """A trainable tensor; with rng/shape given, scaled-normal initialization."""
    if data is None:
        fan_in = shape[0] if len(shape) > 1 else max(shape[0], 1)
        scale = scale if scale is not None else 1.0 / np.sqrt(fan_in)
        data = rng.standard_normal(shape) * scale
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


def global_grad_norm(params: list) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad ** 2).sum())
    return float(np.sqrt(total))


def clip_grad_norm(params: list, max_norm: float) -> float:
    norm = global_grad_norm(params)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


def zero_grads(params: list) -> None:
    for p in params:
        p.grad = None


class Adam:
    """Standard Adam on a fixed parameter list."""

    def __init__(self, params: list, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * p.grad
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * p.grad ** 2
            mh = self.m[i] / b1t
            vh = self.v[i] / b2t
            p.data -= self.lr * mh / (np.sqrt(vh) + self.eps)

    def state_dict(self) -> dict:
        return {"m": [m.copy() for m in self.m], "v": [v.copy() for v in self.v],
                "t": self.t, "lr": self.lr}

    def load_state_dict(self, state: dict) -> None:
        self.m = [m.copy() for m in state["m"]]
        self.v = [v.copy() for v in state["v"]]
        self.t = int(state["t"])
        self.lr = float(state["lr"])
