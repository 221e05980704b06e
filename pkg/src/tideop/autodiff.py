"""Tensor reverse-mode autodiff with second-order forward jets, plus Adam.

The engine is deliberately small. Node values are float64 ndarrays, the
primitive set is just large enough for tanh networks and mean-squared
losses, and reverse accumulation walks a fixed topological order so
gradients are bitwise reproducible. Input derivatives (up to second
order per coordinate) are handled by a forward jet layer whose
components are themselves Nodes, so losses built on those derivatives
stay parameter-differentiable (reverse-over-forward).

Every op passes plain ndarrays straight through to numpy when no Node
is involved, so model code written against these ops runs untaped at
full speed in inference and is taped automatically as soon as a
parameter leaf enters the computation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GradientError(RuntimeError):
    """Raised when a loss or gradient is not finite."""

    def __init__(self, msg, value=None):
        super().__init__(msg)
        self.value = value


class CapabilityError(TypeError):
    """Raised when an operation is not supported for the requested mode."""


# ---------------------------------------------------------------------------
# reverse-mode engine


def _unbroadcast(g, shape):
    """Sum an upstream gradient down to `shape` (inverse of broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Node:
    """One tensor in the computation graph.

    Graphs are single-use: build, call backward() once, read .grad off
    the leaves. Constants (needs_grad=False, no parents) terminate the
    reverse sweep early.
    """

    __slots__ = ("value", "parents", "vjps", "needs_grad", "grad")
    # keep numpy from coercing Nodes so ndarray <op> Node falls back to
    # the reflected operators below
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, value, parents=(), vjps=(), needs_grad=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.vjps = vjps
        if needs_grad is None:
            needs_grad = any(p.needs_grad for p in parents)
        self.needs_grad = needs_grad
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    # mirror the small ndarray API subset the model code uses, so one
    # code path serves both the taped and the plain-numpy evaluation
    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def mean(self, axis=None):
        return mean(self, axis)

    def sum(self, axis=None):
        return vsum(self, axis)

    def __getitem__(self, idx):
        return take(self, idx)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, n):
        return power(self, n)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def constant(value):
    return Node(value, needs_grad=False)


def leaf(value):
    return Node(value, needs_grad=True)


def _lift(x):
    return x if isinstance(x, Node) else constant(x)


def add(a, b):
    if not (isinstance(a, Node) or isinstance(b, Node)):
        return a + b
    a, b = _lift(a), _lift(b)
    return Node(
        a.value + b.value,
        (a, b),
        (lambda g: _unbroadcast(g, a.value.shape), lambda g: _unbroadcast(g, b.value.shape)),
    )


def sub(a, b):
    if not (isinstance(a, Node) or isinstance(b, Node)):
        return a - b
    a, b = _lift(a), _lift(b)
    return Node(
        a.value - b.value,
        (a, b),
        (lambda g: _unbroadcast(g, a.value.shape), lambda g: _unbroadcast(-g, b.value.shape)),
    )


def mul(a, b):
    if not (isinstance(a, Node) or isinstance(b, Node)):
        return a * b
    a, b = _lift(a), _lift(b)
    return Node(
        a.value * b.value,
        (a, b),
        (
            lambda g: _unbroadcast(g * b.value, a.value.shape),
            lambda g: _unbroadcast(g * a.value, b.value.shape),
        ),
    )


def div(a, b):
    if not (isinstance(a, Node) or isinstance(b, Node)):
        return a / b
    a, b = _lift(a), _lift(b)
    return Node(
        a.value / b.value,
        (a, b),
        (
            lambda g: _unbroadcast(g / b.value, a.value.shape),
            lambda g: _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape),
        ),
    )


def power(a, n):
    if not isinstance(a, Node):
        return a ** float(n)
    a = _lift(a)
    n = float(n)
    return Node(a.value**n, (a,), (lambda g: g * n * a.value ** (n - 1.0),))


def square(a):
    if not isinstance(a, Node):
        return a * a
    a = _lift(a)
    return Node(a.value * a.value, (a,), (lambda g: g * 2.0 * a.value,))


def exp(a):
    if not isinstance(a, Node):
        return np.exp(a)
    a = _lift(a)
    out = np.exp(a.value)
    return Node(out, (a,), (lambda g: g * out,))


def tanh(a):
    if not isinstance(a, Node):
        return np.tanh(a)
    out = np.tanh(a.value)
    return Node(out, (a,), (lambda g: g * (1.0 - out * out),))


def matmul(a, b):
    """a @ b with b restricted to 2-D (weight matrices)."""
    if not (isinstance(a, Node) or isinstance(b, Node)):
        return a @ b
    a, b = _lift(a), _lift(b)
    if b.value.ndim != 2:
        raise CapabilityError("matmul: right operand must be 2-D")

    def vjp_a(g):
        return g @ b.value.T

    def vjp_b(g):
        k = a.value.shape[-1]
        return a.value.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])

    return Node(a.value @ b.value, (a, b), (vjp_a, vjp_b))


def reshape(a, shape):
    if not isinstance(a, Node):
        return np.reshape(a, shape)
    a = _lift(a)
    return Node(a.value.reshape(shape), (a,), (lambda g: g.reshape(a.value.shape),))


def transpose(a, axes):
    if not isinstance(a, Node):
        return np.transpose(a, axes)
    a = _lift(a)
    inv = np.argsort(axes)
    return Node(a.value.transpose(axes), (a,), (lambda g: g.transpose(inv),))


def take(a, idx):
    if not isinstance(a, Node):
        return a[idx]
    a = _lift(a)

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return out

    return Node(a.value[idx], (a,), (vjp,))


def vsum(a, axis=None):
    if not isinstance(a, Node):
        return np.sum(a, axis=axis)
    a = _lift(a)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, a.value.shape).copy()
        g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.value.shape).copy()

    return Node(a.value.sum(axis=axis), (a,), (vjp,))


def mean(a, axis=None):
    if not isinstance(a, Node):
        return np.mean(a, axis=axis)
    a = _lift(a)
    n = a.value.size if axis is None else np.prod([a.value.shape[i] for i in np.atleast_1d(axis)])

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g / n, a.value.shape).copy()
        g = np.expand_dims(g / n, axis)
        return np.broadcast_to(g, a.value.shape).copy()

    return Node(a.value.mean(axis=axis), (a,), (vjp,))


def mse(a, b):
    """Mean of squared elementwise differences; the loss workhorse."""
    return mean(square(sub(a, b)))


def value_of(x):
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)


def _topo(root):
    """Postorder over grad-requiring nodes; iterative, fixed order."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.needs_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node.parents):
            stack.append((p, False))
    return order


def backward(root):
    """Reverse accumulation from a scalar root; fills .grad on leaves."""
    if root.value.size != 1:
        raise ValueError("backward requires a scalar root")
    order = _topo(root)
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            if not parent.needs_grad:
                continue
            pg = vjp(g)
            parent.grad = pg if parent.grad is None else parent.grad + pg


# ---------------------------------------------------------------------------
# forward jets: value + first and pure second directional derivatives


class Jet:
    """Value plus directional derivatives along named coordinate axes.

    `first` maps axis name -> derivative array/Node of the same shape as
    the value; `second` holds pure second derivatives along a subset of
    the first axes. Mixed partials are out of scope.
    """

    __slots__ = ("val", "first", "second")

    def __init__(self, val, first, second):
        self.val = val
        self.first = dict(first)
        self.second = dict(second)
        missing = set(self.second) - set(self.first)
        if missing:
            raise ValueError(f"second-order axes without first-order seeds: {sorted(missing)}")


def jet_seed(coords, first_axes, second_axes):
    """Seed a jet on a (Q, d) coordinate block.

    `first_axes`/`second_axes` map axis names to column indices of the
    coordinate block.
    """
    coords = np.asarray(coords, dtype=np.float64)
    first = {}
    for name, col in first_axes.items():
        e = np.zeros_like(coords)
        e[..., col] = 1.0
        first[name] = e
    second = {name: np.zeros_like(coords) for name in second_axes}
    return Jet(coords, first, second)


def jet_affine(j, w, b=None):
    """x @ w (+ b); derivatives pass through the linear map."""
    val = matmul(j.val, w)
    if b is not None:
        val = add(val, b)
    first = {k: matmul(v, w) for k, v in j.first.items()}
    second = {k: matmul(v, w) for k, v in j.second.items()}
    return Jet(val, first, second)


def jet_tanh(j):
    y = tanh(j.val)
    dy = sub(1.0, square(y))
    ddy = mul(mul(y, dy), -2.0)
    first = {k: mul(dy, v) for k, v in j.first.items()}
    second = {k: add(mul(dy, v), mul(ddy, square(j.first[k]))) for k, v in j.second.items()}
    return Jet(y, first, second)


def jet_add(j, other):
    """Add a coordinate-independent term (bias, constant)."""
    return Jet(add(j.val, other), j.first, j.second)


def jet_scale(j, c):
    return Jet(
        mul(j.val, c),
        {k: mul(v, c) for k, v in j.first.items()},
        {k: mul(v, c) for k, v in j.second.items()},
    )


def jet_apply(j, op):
    """Apply a named elementwise primitive to a jet."""
    if op == "tanh":
        return jet_tanh(j)
    raise CapabilityError(f"second-order jet propagation not implemented for primitive '{op}'")


def input_jet(model_eval, inputs, wanted):
    """Evaluate `model_eval` with derivative tracking on its inputs.

    `inputs` is a (d,) or (Q, d) coordinate array. `wanted` lists
    derivative multi-indices as tuples of coordinate columns, e.g.
    (0,) for d/dx0 and (1, 1) for d^2/dx1^2. Orders above two, and
    mixed second partials, are rejected. Returns a dict mapping each
    requested multi-index (plus () for the value) to the output; the
    entries are Nodes when any Node entered the computation, plain
    arrays otherwise.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    first_cols = {}
    second_cols = {}
    for mi in wanted:
        mi = tuple(mi)
        if len(mi) == 1:
            first_cols[f"c{mi[0]}"] = mi[0]
        elif len(mi) == 2 and mi[0] == mi[1]:
            first_cols[f"c{mi[0]}"] = mi[0]
            second_cols[f"c{mi[0]}"] = mi[0]
        else:
            raise CapabilityError(f"unsupported derivative multi-index {mi}: pure order <= 2 only")
    j = jet_seed(inputs, first_cols, second_cols)
    out = model_eval(j)
    if not isinstance(out, Jet):
        raise CapabilityError("model_eval must return a Jet")
    result = {(): out.val}
    for mi in wanted:
        mi = tuple(mi)
        name = f"c{mi[0]}"
        result[mi] = out.first[name] if len(mi) == 1 else out.second[name]
    return result


# ---------------------------------------------------------------------------
# parameter vectors and the optimizer


@dataclass(frozen=True)
class ParamLayout:
    """Name -> (offset, shape) table over one flat parameter vector."""

    names: tuple
    shapes: tuple
    offsets: tuple
    total: int

    @staticmethod
    def build(named_shapes):
        names, shapes, offsets = [], [], []
        off = 0
        for name, shape in named_shapes:
            shape = tuple(int(s) for s in shape)
            names.append(name)
            shapes.append(shape)
            offsets.append(off)
            off += int(np.prod(shape)) if shape else 1
        return ParamLayout(tuple(names), tuple(shapes), tuple(offsets), off)

    def size_of(self, i):
        shape = self.shapes[i]
        return int(np.prod(shape)) if shape else 1

    def index(self, name):
        return self.names.index(name)

    def to_manifest(self):
        return [
            {"name": n, "shape": list(s), "offset": o}
            for n, s, o in zip(self.names, self.shapes, self.offsets)
        ]


@dataclass
class ParamVector:
    """Flat float64 parameter vector plus its layout table."""

    data: np.ndarray
    layout: ParamLayout

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (self.layout.total,):
            raise ValueError(
                f"parameter vector length {self.data.shape} does not match layout total {self.layout.total}"
            )

    def view(self, name):
        i = self.layout.index(name)
        off = self.layout.offsets[i]
        return self.data[off : off + self.layout.size_of(i)].reshape(self.layout.shapes[i])

    def views(self):
        return {name: self.view(name) for name in self.layout.names}

    def as_leaves(self):
        """One grad-requiring leaf Node per named tensor."""
        return {name: leaf(self.view(name)) for name in self.layout.names}

    def copy(self):
        return ParamVector(self.data.copy(), self.layout)


def grad_params(loss_eval, params):
    """Gradient of a scalar loss with respect to a ParamVector.

    `loss_eval` maps a dict of named leaf Nodes (one per layout entry)
    to a scalar Node. Returns (loss value, flat gradient) with the
    gradient assembled in layout order; unused tensors contribute
    zeros. Raises GradientError on a non-finite loss.
    """
    leaves = params.as_leaves()
    out = loss_eval(leaves)
    loss_value = float(value_of(out))
    if not np.isfinite(loss_value):
        raise GradientError(f"non-finite loss {loss_value}", value=loss_value)
    backward(out)
    grad = np.zeros(params.layout.total)
    for i, name in enumerate(params.layout.names):
        g = leaves[name].grad
        if g is None:
            continue
        off = params.layout.offsets[i]
        grad[off : off + params.layout.size_of(i)] = g.ravel()
    return loss_value, grad


def lr_at(step, base, rate, decay_steps):
    """Continuous exponential decay: base * rate**(step / decay_steps)."""
    if base <= 0 or not (0 < rate <= 1) or decay_steps < 1:
        raise ValueError("invalid schedule parameters")
    return base * rate ** (step / decay_steps)


@dataclass
class OptimizerState:
    """Adam moments and step counter, with the decay schedule attached."""

    m: np.ndarray
    v: np.ndarray
    step: int
    base: float
    rate: float
    decay_steps: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def fresh(n_params, base, rate, decay_steps):
        return OptimizerState(np.zeros(n_params), np.zeros(n_params), 0, base, rate, decay_steps)


def adam_step(state, params, grads):
    """One Adam update; returns (new ParamVector, new OptimizerState)."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.data.shape:
        raise ValueError("gradient shape does not match parameters")
    if not np.all(np.isfinite(grads)):
        raise GradientError("non-finite gradient entry; update rejected")
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    step = state.step + 1
    lr = lr_at(state.step, state.base, state.rate, state.decay_steps)
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    data = params.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = OptimizerState(
        m, v, step, state.base, state.rate, state.decay_steps, state.beta1, state.beta2, state.eps
    )
    return ParamVector(data, params.layout), new_state
