"""Reverse-mode automatic differentiation with double-backprop support.

Every backward closure is itself written with Tensor operations, so the
gradient of an expression is a differentiable expression too. That is what
lets a gradient-penalty term (a function of a gradient norm) be trained by
ordinary backpropagation.

Values are stored as float64 ndarrays. The engine is deliberately small:
2-D matmul, elementwise math, reductions, slicing, and concatenation cover
every network in this package.
"""

from __future__ import annotations

import numpy as np


class AutodiffError(ValueError):
    """Invalid operation on tensors."""


class Tensor:
    """A value node in the computation graph.

    parents holds (parent, pull) pairs where pull maps the upstream
    gradient Tensor to this edge's contribution to the parent's gradient.
    """

    __slots__ = ("data", "requires_grad", "parents")

    def __init__(self, data, requires_grad=False, parents=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.parents = tuple(parents)

    # ---------------------------------------------------------- properties

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        return transpose(self)

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # ----------------------------------------------------------- operators

    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, as_tensor(other))

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __pow__(self, p):
        return pow_const(self, p)

    # ------------------------------------------------------------- methods

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def narrow(self, axis, start, length):
        return narrow(self, axis, start, length)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(x, requires_grad=False) -> Tensor:
    return Tensor(x, requires_grad=requires_grad)


def _node(data, parents):
    needs = any(p.requires_grad for p, _ in parents)
    kept = tuple((p, fn) for p, fn in parents if p.requires_grad)
    return Tensor(data, requires_grad=needs, parents=kept)


# ------------------------------------------------------------ broadcasting


def _unbroadcast(g: Tensor, shape) -> Tensor:
    """Reduce a broadcast gradient back to the original operand shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = tensor_sum(g, axis=tuple(range(extra)), keepdims=False)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = tensor_sum(g, axis=axes, keepdims=True)
    if g.shape != tuple(shape):
        g = reshape(g, shape)
    return g


# ------------------------------------------------------------- elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    return _node(
        a.data + b.data,
        [
            (a, lambda g: _unbroadcast(g, a.shape)),
            (b, lambda g: _unbroadcast(g, b.shape)),
        ],
    )


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, [(a, lambda g: neg(g))])


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _node(
        a.data * b.data,
        [
            (a, lambda g: _unbroadcast(mul(g, b), a.shape)),
            (b, lambda g: _unbroadcast(mul(g, a), b.shape)),
        ],
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    return _node(
        a.data / b.data,
        [
            (a, lambda g: _unbroadcast(div(g, b), a.shape)),
            (b, lambda g: _unbroadcast(neg(div(mul(g, a), mul(b, b))), b.shape)),
        ],
    )


def pow_const(a: Tensor, p) -> Tensor:
    p = float(p)
    if p == 2.0:
        return _node(a.data**2, [(a, lambda g: mul(g, mul(as_tensor(2.0), a)))])
    return _node(
        a.data**p,
        [(a, lambda g: mul(g, mul(as_tensor(p), pow_const(a, p - 1.0))))],
    )


def exp(a: Tensor) -> Tensor:
    # backward rebuilds exp(a) from a so second derivatives stay attached
    return _node(np.exp(a.data), [(a, lambda g: mul(g, exp(a)))])


def log(a: Tensor) -> Tensor:
    return _node(np.log(a.data), [(a, lambda g: div(g, a))])


def sqrt(a: Tensor) -> Tensor:
    return _node(
        np.sqrt(a.data), [(a, lambda g: div(g, mul(as_tensor(2.0), sqrt(a))))]
    )


def tanh(a: Tensor) -> Tensor:
    def pull(g):
        t = tanh(a)
        return mul(g, add(as_tensor(1.0), neg(mul(t, t))))

    return _node(np.tanh(a.data), [(a, pull)])


def sigmoid(a: Tensor) -> Tensor:
    def pull(g):
        s = sigmoid(a)
        return mul(g, mul(s, add(as_tensor(1.0), neg(s))))

    return _node(1.0 / (1.0 + np.exp(-a.data)), [(a, pull)])


def softplus(a: Tensor) -> Tensor:
    # log(1 + e^x), computed stably; derivative is sigmoid(x)
    return _node(np.logaddexp(0.0, a.data), [(a, lambda g: mul(g, sigmoid(a)))])


def relu(a: Tensor) -> Tensor:
    mask = Tensor((a.data > 0).astype(np.float64))
    return _node(a.data * mask.data, [(a, lambda g: mul(g, mask))])


def atan2(y: Tensor, x: Tensor) -> Tensor:
    # d/dy = x / (x^2 + y^2), d/dx = -y / (x^2 + y^2)
    def denom():
        return add(mul(x, x), mul(y, y))

    return _node(
        np.arctan2(y.data, x.data),
        [
            (y, lambda g: _unbroadcast(div(mul(g, x), denom()), y.shape)),
            (x, lambda g: _unbroadcast(neg(div(mul(g, y), denom())), x.shape)),
        ],
    )


# ------------------------------------------------------- shape and linear


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise AutodiffError(f"matmul needs 2-D operands, got {a.shape} @ {b.shape}")
    return _node(
        a.data @ b.data,
        [
            (a, lambda g: matmul(g, transpose(b))),
            (b, lambda g: matmul(transpose(a), g)),
        ],
    )


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise AutodiffError(f"transpose needs a 2-D tensor, got {a.shape}")
    return _node(a.data.T.copy(), [(a, lambda g: transpose(g))])


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old = a.shape
    return _node(a.data.reshape(shape), [(a, lambda g: reshape(g, old))])


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old = a.shape
    return _node(
        np.broadcast_to(a.data, shape).copy(), [(a, lambda g: _unbroadcast(g, old))]
    )


def tensor_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def pull(g):
        if axis is None:
            return broadcast_to(reshape(g, (1,) * a.ndim), a.shape)
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % a.ndim for ax in axes)
        if keepdims:
            return broadcast_to(g, a.shape)
        kept = [1 if i in axes else n for i, n in enumerate(a.shape)]
        return broadcast_to(reshape(g, kept), a.shape)

    return _node(out_data, [(a, pull)])


def tensor_mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = 1
        for ax in axes:
            count *= a.shape[ax % a.ndim]
    s = tensor_sum(a, axis=axis, keepdims=keepdims)
    return mul(s, as_tensor(1.0 / count))


def narrow(a: Tensor, axis, start, length) -> Tensor:
    axis = axis % a.ndim
    if start < 0 or start + length > a.shape[axis]:
        raise AutodiffError(
            f"narrow [{start}:{start + length}] out of range for axis {axis} "
            f"of shape {a.shape}"
        )
    idx = tuple(
        slice(start, start + length) if i == axis else slice(None)
        for i in range(a.ndim)
    )
    return _node(
        a.data[idx].copy(), [(a, lambda g: _pad_slice(g, a.shape, axis, start))]
    )


def _pad_slice(g: Tensor, full_shape, axis, start) -> Tensor:
    """Embed g into zeros of full_shape at offset start along axis (linear)."""
    length = g.shape[axis]
    out = np.zeros(full_shape, dtype=np.float64)
    idx = tuple(
        slice(start, start + length) if i == axis else slice(None)
        for i in range(len(full_shape))
    )
    out[idx] = g.data
    return _node(out, [(g, lambda up: narrow(up, axis, start, length))])


def concat(parts, axis=0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise AutodiffError("concat of zero tensors")
    axis = axis % parts[0].ndim
    out = np.concatenate([p.data for p in parts], axis=axis)
    edges = []
    off = 0
    for p in parts:
        start, length = off, p.shape[axis]

        def pull(g, _a=axis, _s=start, _l=length):
            return narrow(g, _a, _s, _l)

        edges.append((p, pull))
        off += length
    return _node(out, edges)


# ------------------------------------------------------------- norms, misc


def l2_norm(a: Tensor, axis=None, eps=1e-12) -> Tensor:
    """sqrt(sum(a^2) + eps); eps keeps the derivative finite at zero."""
    return sqrt(add(tensor_sum(mul(a, a), axis=axis), as_tensor(eps)))


def smooth_max(values, eps=0.01) -> Tensor:
    """Left fold of the smoothed two-argument max over a list of scalars.

    S(a, b) = (a + b + sqrt((a - b)^2 + eps^2)) / 2, applied left to right.
    """
    values = [as_tensor(v) for v in values]
    if not values:
        raise AutodiffError("smooth_max of zero values")
    acc = values[0]
    e2 = as_tensor(float(eps) ** 2)
    for v in values[1:]:
        d = add(acc, neg(v))
        root = sqrt(add(mul(d, d), e2))
        acc = mul(as_tensor(0.5), add(add(acc, v), root))
    return acc


# ---------------------------------------------------------------- backward


def grad(output: Tensor, sources, create_graph=False):
    """Gradients of a scalar output with respect to each source tensor.

    With create_graph=True the returned tensors stay attached to the graph,
    so expressions built from them (a gradient-norm penalty) can be
    differentiated again. Sources that the output does not depend on get
    zero gradients.
    """
    if output.size != 1:
        raise AutodiffError(f"grad needs a scalar output, got shape {output.shape}")
    sources = list(sources)

    order = []
    seen = set()
    stack = [(output, False)]
    while stack:
        node, ready = stack.pop()
        if ready:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    grads = {id(output): Tensor(np.ones_like(output.data))}
    holder = {id(output): output}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None:
            continue
        for parent, pull in node.parents:
            contrib = pull(g)
            if contrib.shape != parent.shape:
                raise AutodiffError(
                    f"backward shape mismatch: {contrib.shape} vs {parent.shape}"
                )
            prev = grads.get(id(parent))
            grads[id(parent)] = contrib if prev is None else add(prev, contrib)
            holder[id(parent)] = parent

    out = []
    for src in sources:
        g = grads.get(id(src))
        if g is None:
            g = Tensor(np.zeros_like(src.data))
        out.append(g if create_graph else g.detach())
    return out
