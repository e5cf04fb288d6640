"""Define-by-run reverse-mode differentiation over dense 2-D float64 arrays.

A :class:`Tape` records every primitive applied to its nodes. ``backward``
walks the tape in reverse; with ``build_graph=True`` the vector-Jacobian
products are themselves recorded as primitives, so a gradient can be
differentiated again (the gradient-penalty path needs this).

Every node value is a 2-D ``numpy.ndarray`` of dtype float64. Scalars are 1x1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class AutodiffError(Exception):
    """Base class for tape errors."""


class ShapeError(AutodiffError):
    def __init__(self, op: str, *shapes: tuple):
        self.op = op
        self.shapes = shapes
        shown = " and ".join(str(s) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {shown}")


class NumericError(AutodiffError):
    def __init__(self, op: str, index: int):
        self.op = op
        self.index = index
        super().__init__(f"{op}: non-finite value produced at node {index}")


class Node:
    """One recorded value on a tape."""

    __slots__ = ("tape", "index", "value", "op", "inputs", "ctx")

    def __init__(self, tape, index, value, op, inputs, ctx):
        self.tape = tape
        self.index = index
        self.value = value
        self.op = op
        self.inputs = inputs
        self.ctx = ctx

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value[0, 0])

    def __repr__(self):
        return f"Node({self.index}, {self.op}, shape={self.shape})"

    def __add__(self, other):
        return add(self, _lift(self, other))

    def __radd__(self, other):
        return add(self, _lift(self, other))

    def __sub__(self, other):
        return sub(self, _lift(self, other))

    def __rsub__(self, other):
        return sub(_lift(self, other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(ref: Node, other) -> Node:
    if isinstance(other, Node):
        return other
    return ref.tape.const(np.full((1, 1), float(other)))


class Tape:
    """Append-only list of nodes in topological order."""

    def __init__(self, check_finite: bool = True):
        self.nodes: list[Node] = []
        self.check_finite = check_finite

    def __len__(self):
        return len(self.nodes)

    def _append(self, value, op, inputs=(), ctx=None) -> Node:
        node = Node(self, len(self.nodes), value, op, inputs, ctx)
        self.nodes.append(node)
        return node

    def leaf(self, value) -> Node:
        """Record a differentiable input (parameters, inputs we want gradients for)."""
        return self._append(_as_matrix(value), "leaf")

    def const(self, value) -> Node:
        return self._append(_as_matrix(value), "const")

    def record(self, op: str, inputs: Sequence[Node], ctx=None) -> Node:
        """Apply primitive ``op`` to ``inputs`` and append the result."""
        prim = PRIMITIVES.get(op)
        if prim is None:
            raise AutodiffError(f"unknown primitive {op!r}")
        for x in inputs:
            if x.tape is not self:
                raise AutodiffError(f"{op}: input node belongs to a different tape")
        value = prim.forward(ctx, *[x.value for x in inputs])
        # the sum is a cheap screen: NaN/inf anywhere makes it non-finite
        if self.check_finite and not math.isfinite(value.sum()) and not np.isfinite(value).all():
            raise NumericError(op, len(self.nodes))
        return self._append(value, op, tuple(inputs), ctx)


def _as_matrix(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError("leaf", arr.shape)
    return arr


# ---------------------------------------------------------------------------
# primitives
#
# Each primitive carries a numpy forward, a numpy VJP (first-order fast path)
# and optionally a graph VJP that records onto the tape. VJPs receive the
# ``needs`` mask and return None for inputs whose gradient is not required.


@dataclass(frozen=True)
class Primitive:
    forward: Callable
    vjp: Callable
    graph_vjp: Callable | None = None


PRIMITIVES: dict[str, Primitive] = {}


def _unbroadcast_np(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _unbroadcast(g: Node, shape) -> Node:
    if g.shape == shape:
        return g
    if shape == (1, 1):
        return reduce_sum(g)
    if shape[0] == 1:
        return reduce_sum(g, axis=0)
    return reduce_sum(g, axis=1)


def _broadcast_shape(op, a, b):
    shape = []
    for m, n in zip(a.shape, b.shape):
        if m != n and 1 not in (m, n):
            raise ShapeError(op, a.shape, b.shape)
        shape.append(max(m, n))
    return tuple(shape)


def _register(name, forward, vjp, graph_vjp=None):
    PRIMITIVES[name] = Primitive(forward, vjp, graph_vjp)


def _fwd_matmul(ctx, a, b):
    if a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    return a @ b


_register(
    "matmul",
    _fwd_matmul,
    lambda ctx, g, ins, out, needs: (
        g @ ins[1].value.T if needs[0] else None,
        ins[0].value.T @ g if needs[1] else None,
    ),
    lambda ctx, g, ins, out, needs: (
        matmul(g, transpose(ins[1])) if needs[0] else None,
        matmul(transpose(ins[0]), g) if needs[1] else None,
    ),
)


def _fwd_add(ctx, a, b):
    _broadcast_shape("add", a, b)
    return a + b


def _fwd_sub(ctx, a, b):
    _broadcast_shape("sub", a, b)
    return a - b


def _fwd_mul(ctx, a, b):
    _broadcast_shape("mul", a, b)
    return a * b


_register(
    "add",
    _fwd_add,
    lambda ctx, g, ins, out, needs: (
        _unbroadcast_np(g, ins[0].shape) if needs[0] else None,
        _unbroadcast_np(g, ins[1].shape) if needs[1] else None,
    ),
    lambda ctx, g, ins, out, needs: (
        _unbroadcast(g, ins[0].shape) if needs[0] else None,
        _unbroadcast(g, ins[1].shape) if needs[1] else None,
    ),
)
_register(
    "sub",
    _fwd_sub,
    lambda ctx, g, ins, out, needs: (
        _unbroadcast_np(g, ins[0].shape) if needs[0] else None,
        -_unbroadcast_np(g, ins[1].shape) if needs[1] else None,
    ),
    lambda ctx, g, ins, out, needs: (
        _unbroadcast(g, ins[0].shape) if needs[0] else None,
        neg(_unbroadcast(g, ins[1].shape)) if needs[1] else None,
    ),
)
_register(
    "mul",
    _fwd_mul,
    lambda ctx, g, ins, out, needs: (
        _unbroadcast_np(g * ins[1].value, ins[0].shape) if needs[0] else None,
        _unbroadcast_np(g * ins[0].value, ins[1].shape) if needs[1] else None,
    ),
    lambda ctx, g, ins, out, needs: (
        _unbroadcast(mul(g, ins[1]), ins[0].shape) if needs[0] else None,
        _unbroadcast(mul(g, ins[0]), ins[1].shape) if needs[1] else None,
    ),
)
_register(
    "scale",
    lambda c, a: c * a,
    lambda c, g, ins, out, needs: (c * g,),
    lambda c, g, ins, out, needs: (scale(g, c),),
)
_register(
    "neg",
    lambda ctx, a: -a,
    lambda ctx, g, ins, out, needs: (-g,),
    lambda ctx, g, ins, out, needs: (neg(g),),
)


def _lrelu_slope(alpha, x):
    # slope alpha at exactly 0 (subgradient convention)
    return (x > 0) * (1.0 - alpha) + alpha


def _fwd_lrelu(alpha, a):
    if 0.0 <= alpha <= 1.0:
        return np.maximum(a, alpha * a)
    return np.where(a > 0, a, alpha * a)


_register(
    "leaky_relu",
    _fwd_lrelu,
    lambda alpha, g, ins, out, needs: (g * _lrelu_slope(alpha, ins[0].value),),
    lambda alpha, g, ins, out, needs: (
        mul(g, g.tape.const(_lrelu_slope(alpha, ins[0].value))),
    ),
)


def _sigmoid_np(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


_register(
    "sigmoid",
    lambda ctx, a: _sigmoid_np(a),
    lambda ctx, g, ins, out, needs: (g * out.value * (1.0 - out.value),),
    lambda ctx, g, ins, out, needs: (mul(g, sub(out, square(out))),),
)
_register(
    "tanh",
    lambda ctx, a: np.tanh(a),
    lambda ctx, g, ins, out, needs: (g * (1.0 - out.value**2),),
    lambda ctx, g, ins, out, needs: (sub(g, mul(g, square(out))),),
)
_register(
    "exp",
    lambda ctx, a: np.exp(a),
    lambda ctx, g, ins, out, needs: (g * out.value,),
    lambda ctx, g, ins, out, needs: (mul(g, out),),
)


def _fwd_log(ctx, a):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(a)


_register(
    "log",
    _fwd_log,
    lambda ctx, g, ins, out, needs: (g / ins[0].value,),
    lambda ctx, g, ins, out, needs: (mul(g, reciprocal(ins[0])),),
)


def _fwd_reciprocal(ctx, a):
    with np.errstate(divide="ignore"):
        return 1.0 / a


_register(
    "reciprocal",
    _fwd_reciprocal,
    lambda ctx, g, ins, out, needs: (-g * out.value**2,),
    lambda ctx, g, ins, out, needs: (neg(mul(g, square(out))),),
)
_register(
    "square",
    lambda ctx, a: a * a,
    lambda ctx, g, ins, out, needs: (2.0 * g * ins[0].value,),
    lambda ctx, g, ins, out, needs: (scale(mul(g, ins[0]), 2.0),),
)


def _fwd_sqrt(ctx, a):
    with np.errstate(invalid="ignore"):
        return np.sqrt(a)


def _vjp_sqrt(ctx, g, ins, out, needs):
    with np.errstate(divide="ignore", invalid="ignore"):
        return (0.5 * g / out.value,)


_register(
    "sqrt",
    _fwd_sqrt,
    _vjp_sqrt,
    lambda ctx, g, ins, out, needs: (mul(g, scale(reciprocal(out), 0.5)),),
)


def _softplus_np(a):
    return np.maximum(a, 0.0) + np.log1p(np.exp(-np.abs(a)))


_register(
    "softplus",
    lambda ctx, a: _softplus_np(a),
    lambda ctx, g, ins, out, needs: (g * _sigmoid_np(ins[0].value),),
    lambda ctx, g, ins, out, needs: (mul(g, sigmoid(ins[0])),),
)


def _fwd_sum(axis, a):
    if axis is None:
        return np.array([[a.sum()]])
    return a.sum(axis=axis, keepdims=True)


_register(
    "sum",
    _fwd_sum,
    lambda axis, g, ins, out, needs: (np.broadcast_to(g, ins[0].shape).copy(),),
    lambda axis, g, ins, out, needs: (broadcast_to(g, ins[0].shape),),
)


def _fwd_mean(axis, a):
    if axis is None:
        return np.array([[a.mean()]])
    return a.mean(axis=axis, keepdims=True)


def _mean_count(axis, shape):
    if axis is None:
        return shape[0] * shape[1]
    return shape[axis]


_register(
    "mean",
    _fwd_mean,
    lambda axis, g, ins, out, needs: (
        np.broadcast_to(g / _mean_count(axis, ins[0].shape), ins[0].shape).copy(),
    ),
    lambda axis, g, ins, out, needs: (
        scale(broadcast_to(g, ins[0].shape), 1.0 / _mean_count(axis, ins[0].shape)),
    ),
)


def _fwd_broadcast(shape, a):
    if (a.shape[0] not in (1, shape[0])) or (a.shape[1] not in (1, shape[1])):
        raise ShapeError("broadcast_to", a.shape, shape)
    return np.broadcast_to(a, shape).copy()


_register(
    "broadcast_to",
    _fwd_broadcast,
    lambda shape, g, ins, out, needs: (_unbroadcast_np(g, ins[0].shape),),
    lambda shape, g, ins, out, needs: (_unbroadcast(g, ins[0].shape),),
)
_register(
    "rowsum_sq",
    lambda ctx, a: np.einsum("ij,ij->i", a, a)[:, None],
    lambda ctx, g, ins, out, needs: (2.0 * g * ins[0].value,),
    lambda ctx, g, ins, out, needs: (
        mul(broadcast_to(g, ins[0].shape), scale(ins[0], 2.0)),
    ),
)
_register(
    "transpose",
    lambda ctx, a: a.T.copy(),
    lambda ctx, g, ins, out, needs: (g.T,),
    lambda ctx, g, ins, out, needs: (transpose(g),),
)


def _fwd_concat(ctx, a, b):
    if a.shape[0] != b.shape[0]:
        raise ShapeError("concat_cols", a.shape, b.shape)
    return np.concatenate([a, b], axis=1)


_register(
    "concat_cols",
    _fwd_concat,
    lambda ctx, g, ins, out, needs: (
        g[:, : ins[0].shape[1]] if needs[0] else None,
        g[:, ins[0].shape[1] :] if needs[1] else None,
    ),
    lambda ctx, g, ins, out, needs: (
        slice_cols(g, 0, ins[0].shape[1]) if needs[0] else None,
        slice_cols(g, ins[0].shape[1], g.shape[1]) if needs[1] else None,
    ),
)


def _fwd_slice(bounds, a):
    lo, hi = bounds
    if not 0 <= lo < hi <= a.shape[1]:
        raise ShapeError("slice_cols", a.shape, bounds)
    return a[:, lo:hi].copy()


def _vjp_slice(bounds, g, ins, out, needs):
    full = np.zeros(ins[0].shape)
    full[:, bounds[0] : bounds[1]] = g
    return (full,)


def _graph_vjp_slice(bounds, g, ins, out, needs):
    lo, hi = bounds
    n, d = ins[0].shape
    parts = g
    if lo > 0:
        parts = concat_cols(g.tape.const(np.zeros((n, lo))), parts)
    if hi < d:
        parts = concat_cols(parts, g.tape.const(np.zeros((n, d - hi))))
    return (parts,)


_register("slice_cols", _fwd_slice, _vjp_slice, _graph_vjp_slice)


def _fwd_concat_rows(ctx, a, b):
    if a.shape[1] != b.shape[1]:
        raise ShapeError("concat_rows", a.shape, b.shape)
    return np.concatenate([a, b], axis=0)


_register(
    "concat_rows",
    _fwd_concat_rows,
    lambda ctx, g, ins, out, needs: (
        g[: ins[0].shape[0]] if needs[0] else None,
        g[ins[0].shape[0] :] if needs[1] else None,
    ),
    lambda ctx, g, ins, out, needs: (
        slice_rows(g, 0, ins[0].shape[0]) if needs[0] else None,
        slice_rows(g, ins[0].shape[0], g.shape[0]) if needs[1] else None,
    ),
)


def _fwd_slice_rows(bounds, a):
    lo, hi = bounds
    if not 0 <= lo < hi <= a.shape[0]:
        raise ShapeError("slice_rows", a.shape, bounds)
    return a[lo:hi].copy()


def _vjp_slice_rows(bounds, g, ins, out, needs):
    full = np.zeros(ins[0].shape)
    full[bounds[0] : bounds[1]] = g
    return (full,)


def _graph_vjp_slice_rows(bounds, g, ins, out, needs):
    lo, hi = bounds
    n, d = ins[0].shape
    parts = g
    if lo > 0:
        parts = concat_rows(g.tape.const(np.zeros((lo, d))), parts)
    if hi < n:
        parts = concat_rows(parts, g.tape.const(np.zeros((n - hi, d))))
    return (parts,)


_register("slice_rows", _fwd_slice_rows, _vjp_slice_rows, _graph_vjp_slice_rows)


# ---------------------------------------------------------------------------
# public op constructors


def matmul(a: Node, b: Node) -> Node:
    return a.tape.record("matmul", (a, b))


def add(a: Node, b: Node) -> Node:
    """Elementwise sum with row/column broadcasting (e.g. a 1xC bias row)."""
    return a.tape.record("add", (a, b))


def sub(a: Node, b: Node) -> Node:
    return a.tape.record("sub", (a, b))


def mul(a: Node, b: Node) -> Node:
    return a.tape.record("mul", (a, b))


def scale(a: Node, c: float) -> Node:
    return a.tape.record("scale", (a,), float(c))


def neg(a: Node) -> Node:
    return a.tape.record("neg", (a,))


def leaky_relu(a: Node, alpha: float = 0.2) -> Node:
    return a.tape.record("leaky_relu", (a,), float(alpha))


def relu(a: Node) -> Node:
    return leaky_relu(a, 0.0)


def sigmoid(a: Node) -> Node:
    return a.tape.record("sigmoid", (a,))


def tanh(a: Node) -> Node:
    return a.tape.record("tanh", (a,))


def exp(a: Node) -> Node:
    return a.tape.record("exp", (a,))


def log(a: Node) -> Node:
    return a.tape.record("log", (a,))


def reciprocal(a: Node) -> Node:
    return a.tape.record("reciprocal", (a,))


def square(a: Node) -> Node:
    return a.tape.record("square", (a,))


def sqrt(a: Node) -> Node:
    return a.tape.record("sqrt", (a,))


def softplus(a: Node) -> Node:
    """``log(1 + exp(a))`` evaluated without overflow."""
    return a.tape.record("softplus", (a,))


def reduce_sum(a: Node, axis: int | None = None) -> Node:
    return a.tape.record("sum", (a,), axis)


def mean(a: Node, axis: int | None = None) -> Node:
    return a.tape.record("mean", (a,), axis)


def broadcast_to(a: Node, shape) -> Node:
    return a.tape.record("broadcast_to", (a,), tuple(shape))


def rowsum_sq(a: Node) -> Node:
    """Row-wise squared L2 norm, N x D -> N x 1."""
    return a.tape.record("rowsum_sq", (a,))


def transpose(a: Node) -> Node:
    return a.tape.record("transpose", (a,))


def concat_cols(a: Node, b: Node) -> Node:
    return a.tape.record("concat_cols", (a, b))


def slice_cols(a: Node, lo: int, hi: int) -> Node:
    return a.tape.record("slice_cols", (a,), (int(lo), int(hi)))


def concat_rows(a: Node, b: Node) -> Node:
    return a.tape.record("concat_rows", (a, b))


def slice_rows(a: Node, lo: int, hi: int) -> Node:
    return a.tape.record("slice_rows", (a,), (int(lo), int(hi)))


# ---------------------------------------------------------------------------
# reverse pass


@dataclass
class GradientMap:
    """Gradients keyed by leaf node.

    ``unreachable`` lists leaves the output does not depend on; their gradient
    is exactly zero.
    """

    grads: dict = field(default_factory=dict)
    unreachable: list = field(default_factory=list)

    def __getitem__(self, leaf: Node):
        return self.grads[leaf]

    def __contains__(self, leaf):
        return leaf in self.grads

    def __len__(self):
        return len(self.grads)

    def values(self):
        return self.grads.values()

    def items(self):
        return self.grads.items()


def backward(output: Node, leaves: Sequence[Node], build_graph: bool = False) -> GradientMap:
    """Gradient of the scalar ``output`` with respect to each of ``leaves``.

    With ``build_graph`` the returned gradients are tape nodes that can be
    differentiated again; otherwise they are plain arrays.
    """
    if output.shape != (1, 1):
        raise ShapeError("backward", output.shape, (1, 1))
    tape = output.tape
    nodes = tape.nodes[: output.index + 1]
    for leaf in leaves:
        if leaf.tape is not tape:
            raise AutodiffError("backward: leaf belongs to a different tape")

    # only propagate along nodes that depend on a requested leaf
    live = bytearray(len(nodes))
    for leaf in leaves:
        if leaf.index < len(nodes):
            live[leaf.index] = 1
    for node in nodes:
        if node.inputs and not live[node.index]:
            for x in node.inputs:
                if live[x.index]:
                    live[node.index] = 1
                    break

    if build_graph:
        grads = {output.index: tape.const(np.ones((1, 1)))}
    else:
        grads = {output.index: np.ones((1, 1))}
    leaf_ids = {leaf.index for leaf in leaves}

    if live[output.index]:
        for node in reversed(nodes):
            if not node.inputs or not live[node.index]:
                continue
            g = grads.get(node.index)
            if g is None:
                continue
            if node.index not in leaf_ids:
                del grads[node.index]
            prim = PRIMITIVES[node.op]
            needs = tuple(bool(live[x.index]) for x in node.inputs)
            if build_graph:
                if prim.graph_vjp is None:
                    raise AutodiffError(f"{node.op}: no differentiable backward rule")
                parts = prim.graph_vjp(node.ctx, g, node.inputs, node, needs)
            else:
                parts = prim.vjp(node.ctx, g, node.inputs, node, needs)
            for x, part in zip(node.inputs, parts):
                if part is None:
                    continue
                prev = grads.get(x.index)
                if prev is None:
                    grads[x.index] = part
                elif build_graph:
                    grads[x.index] = add(prev, part)
                else:
                    grads[x.index] = prev + part

    result = GradientMap()
    for leaf in leaves:
        g = grads.get(leaf.index)
        if g is None:
            result.unreachable.append(leaf)
            zeros = np.zeros(leaf.shape)
            g = tape.const(zeros) if build_graph else zeros
        result.grads[leaf] = g
    return result


def grad_wrt_input(forward: Callable[[Node], Node], x: Node) -> Node:
    """Per-row gradient of a row-scalar network with respect to its input.

    ``forward`` maps the N x D node ``x`` to an N x 1 node. Rows are independent,
    so the gradient of the column sum gives every row's input gradient at once.
    The result is recorded on the tape and can be differentiated again.
    """
    out = forward(x)
    if out.shape != (x.shape[0], 1):
        raise ShapeError("grad_wrt_input", x.shape, out.shape)
    return backward(reduce_sum(out), [x], build_graph=True)[x]
