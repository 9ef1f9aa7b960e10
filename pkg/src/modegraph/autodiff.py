"""Minimal reverse-mode differentiation over numpy arrays.

Only the operations the forecaster needs are provided: einsum (which covers
matrix products, Hadamard products and the shift-matrix convolution),
broadcasting add/sub/mul, sigmoid, ReLU, softmax and mean absolute error.
"""

from __future__ import annotations

import numpy as np


class Var:
    __slots__ = ("value", "grad", "_parents", "name")

    def __init__(self, value, parents=(), name=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self._parents = parents  # tuple of (Var, vjp)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def backward(self, seed=None):
        """Accumulate gradients of this (scalar by default) node into every ancestor."""
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.value) if seed is None else np.asarray(seed, dtype=float)
        for node in reversed(order):
            if node.grad is None:
                continue
            for parent, vjp in node._parents:
                g = vjp(node.grad)
                parent.grad = g if parent.grad is None else parent.grad + g


def _lift(x):
    return x if isinstance(x, Var) else Var(x)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b):
    a, b = _lift(a), _lift(b)
    return Var(a.value + b.value,
               ((a, lambda g: _unbroadcast(g, a.shape)), (b, lambda g: _unbroadcast(g, b.shape))))


def sub(a, b):
    a, b = _lift(a), _lift(b)
    return Var(a.value - b.value,
               ((a, lambda g: _unbroadcast(g, a.shape)), (b, lambda g: _unbroadcast(-g, b.shape))))


def mul(a, b):
    a, b = _lift(a), _lift(b)
    return Var(a.value * b.value,
               ((a, lambda g: _unbroadcast(g * b.value, a.shape)),
                (b, lambda g: _unbroadcast(g * a.value, b.shape))))


def einsum(subscripts: str, *operands):
    """Differentiable ``np.einsum`` with explicit output (``'ij,jk->ik'``).

    Plain arrays are treated as constants. Repeated indices within one
    operand are not supported.
    """
    inputs, out = subscripts.replace(" ", "").split("->")
    specs = inputs.split(",")
    ops = [_lift(o) for o in operands]
    values = [o.value for o in ops]
    result = np.einsum(subscripts, *values, optimize=True)
    parents = []
    for i, (op, spec) in enumerate(zip(ops, specs)):
        if not op._parents and not isinstance(operands[i], Var):
            continue
        parents.append((op, _einsum_vjp(i, specs, out, values)))
    return Var(result, tuple(parents))


def _einsum_vjp(i, specs, out, values):
    spec = specs[i]
    others = [(s, v) for j, (s, v) in enumerate(zip(specs, values)) if j != i]
    available = set(out).union(*[set(s) for s, _ in others]) if others else set(out)
    kept = "".join(c for c in spec if c in available)
    expr = ",".join([out] + [s for s, _ in others]) + "->" + kept
    shape = values[i].shape

    def vjp(g):
        grad = np.einsum(expr, g, *[v for _, v in others], optimize=True)
        if kept != spec:
            # indices summed only inside this operand: gradient is constant along them
            idx = [kept.index(c) if c in kept else None for c in spec]
            expand = [slice(None) if j is not None else np.newaxis for j in idx]
            grad = np.broadcast_to(grad[tuple(expand)], shape)
        return grad

    return vjp


def sigmoid(x):
    x = _lift(x)
    v = x.value
    e = np.exp(-np.abs(v))
    y = np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return Var(y, ((x, lambda g: g * y * (1.0 - y)),))


def relu(x):
    x = _lift(x)
    mask = x.value > 0
    return Var(np.where(mask, x.value, 0.0), ((x, lambda g: g * mask),))


def softmax(x, axis=-1):
    x = _lift(x)
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return y * (g - (g * y).sum(axis=axis, keepdims=True))

    return Var(y, ((x, vjp),))


def mean_abs(x):
    """Mean absolute value; the subgradient at 0 is 0."""
    x = _lift(x)
    n = x.value.size
    return Var(np.abs(x.value).mean(), ((x, lambda g: g * np.sign(x.value) / n),))
