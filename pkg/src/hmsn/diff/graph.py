"""Reverse-mode tape: nodes, graphs, replayed forward and backward sweeps."""

from __future__ import annotations

from typing import Any, Callable, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    """A NaN or Inf showed up in a node value or adjoint."""

    def __init__(self, node_id: int, op: str, where: str = "value"):
        super().__init__(f"non-finite {where} at node {node_id} (op={op})")
        self.node_id = node_id
        self.op = op
        self.where = where


class ScalarLossError(ValueError):
    pass


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Node:
    __array_ufunc__ = None  # ndarray <op> Node defers to the Node reflected op

    __slots__ = ("graph", "id", "op", "args", "attrs", "value", "requires_grad", "_adjoint", "name")

    def __init__(self, graph, op, args, attrs, value, requires_grad, name=None):
        self.graph = graph
        self.id = len(graph.nodes)
        self.op = op
        self.args = args
        self.attrs = attrs
        self.value = value
        self.requires_grad = requires_grad
        self._adjoint = None
        self.name = name

    @property
    def input_ids(self) -> list[int]:
        return [a.id for a in self.args if isinstance(a, Node)]

    @property
    def adjoint(self) -> np.ndarray:
        if self._adjoint is None:
            return np.zeros_like(self.value)
        return self._adjoint

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Node(id={self.id}, op={self.op.name}, shape={self.value.shape})"

    # operator sugar; the op table is filled in by ops.py
    def __add__(self, o):
        return _OPS["add"](self, o)

    def __radd__(self, o):
        return _OPS["add"](o, self)

    def __sub__(self, o):
        return _OPS["sub"](self, o)

    def __rsub__(self, o):
        return _OPS["sub"](o, self)

    def __mul__(self, o):
        return _OPS["mul"](self, o)

    def __rmul__(self, o):
        return _OPS["mul"](o, self)

    def __truediv__(self, o):
        return _OPS["div"](self, o)

    def __rtruediv__(self, o):
        return _OPS["div"](o, self)

    def __neg__(self):
        return _OPS["neg"](self)

    def __pow__(self, p):
        return _OPS["power"](self, p)

    def __matmul__(self, o):
        return _OPS["matmul"](self, o)

    def __rmatmul__(self, o):
        return _OPS["matmul"](o, self)

    def __getitem__(self, idx):
        return _OPS["getitem"](self, idx)

    def sum(self, axis=None, keepdims=False):
        return _OPS["sum"](self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return _OPS["mean"](self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _OPS["reshape"](self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return _OPS["transpose"](self, axes or None)


_OPS: dict[str, Callable[..., Any]] = {}


class Graph:
    """Append-only tape of nodes.

    Values are computed eagerly as nodes are appended, and can be recomputed
    from the leaves with :func:`forward` after leaf values change.
    """

    def __init__(self, check_finite: bool = True):
        self.nodes: list[Node] = []
        self.parameter_ids: set[int] = set()
        self.check_finite = check_finite

    def leaf(self, value, trainable: bool = False, name: str | None = None) -> Node:
        value = np.array(value, dtype=np.float64)
        node = Node(self, LEAF, (), {}, value, trainable, name)
        self.nodes.append(node)
        if trainable:
            self.parameter_ids.add(node.id)
        return node

    def param(self, value, name: str | None = None) -> Node:
        return self.leaf(value, trainable=True, name=name)

    def params(self, values: dict[str, np.ndarray]) -> dict[str, Node]:
        return {k: self.param(v, name=k) for k, v in values.items()}

    def _append(self, op, args, attrs, value, requires_grad) -> Node:
        node = Node(self, op, args, attrs, value, requires_grad)
        self.nodes.append(node)
        if self.check_finite and not np.all(np.isfinite(value)):
            raise NonFiniteError(node.id, op.name)
        return node

    def __len__(self):
        return len(self.nodes)


class Op:
    """A primitive: forward kernel plus vector-Jacobian products.

    ``vjp(g, out, *arg_values, **attrs)`` returns one gradient (or None) per
    positional argument, already shaped like the output broadcast; the tape
    reduces broadcast dimensions.
    """

    def __init__(self, name: str, fwd: Callable, vjp: Callable | None):
        self.name = name
        self.fwd = fwd
        self.vjp = vjp

    def __call__(self, *args, **attrs):
        graph = None
        for a in args:
            if isinstance(a, Node):
                graph = a.graph
                break
        if graph is None:
            return self.fwd(*args, **attrs)
        vals = [a.value if isinstance(a, Node) else a for a in args]
        out = np.asarray(self.fwd(*vals, **attrs), dtype=np.float64)
        rg = self.vjp is not None and any(isinstance(a, Node) and a.requires_grad for a in args)
        return graph._append(self, tuple(args), attrs, out, rg)

    def __repr__(self):
        return f"Op({self.name})"


LEAF = Op("leaf", lambda v: v, None)


def forward(graph: Graph, outputs: Sequence[Node | int]) -> list[np.ndarray]:
    """Recompute every node from the current leaf values; return requested values."""
    for node in graph.nodes:
        if node.op is LEAF:
            continue
        vals = [a.value if isinstance(a, Node) else a for a in node.args]
        node.value = np.asarray(node.op.fwd(*vals, **node.attrs), dtype=np.float64)
        if not np.all(np.isfinite(node.value)):
            raise NonFiniteError(node.id, node.op.name)
    return [graph.nodes[o if isinstance(o, int) else o.id].value for o in outputs]


def backward(graph: Graph, loss: Node | int) -> dict[int, np.ndarray]:
    """Fill adjoints by a reverse sweep; return gradients for every trainable leaf."""
    loss = graph.nodes[loss] if isinstance(loss, int) else loss
    if loss.value.size != 1:
        raise ScalarLossError(f"loss node {loss.id} has shape {loss.value.shape}, expected scalar")
    for node in graph.nodes:
        node._adjoint = None
    loss._adjoint = np.ones_like(loss.value)
    for node in reversed(graph.nodes[: loss.id + 1]):
        g = node._adjoint
        if g is None or not node.requires_grad or node.op is LEAF:
            continue
        vals = [a.value if isinstance(a, Node) else a for a in node.args]
        grads = node.op.vjp(g, node.value, *vals, **node.attrs)
        for arg, ga in zip(node.args, grads):
            if ga is None or not isinstance(arg, Node) or not arg.requires_grad:
                continue
            ga = _unbroadcast(np.asarray(ga, dtype=np.float64), arg.value.shape)
            if arg._adjoint is None:
                arg._adjoint = ga.copy()
            else:
                arg._adjoint += ga
    out = {}
    for pid in sorted(graph.parameter_ids):
        adj = graph.nodes[pid].adjoint
        if not np.all(np.isfinite(adj)):
            raise NonFiniteError(pid, "leaf", where="gradient")
        out[pid] = adj
    return out


def grad(loss: Node, params: dict[str, Node]) -> dict[str, np.ndarray]:
    """Named-parameter convenience wrapper around :func:`backward`."""
    g = backward(loss.graph, loss)
    return {k: g[n.id] for k, n in params.items()}


def value(x) -> np.ndarray:
    """Strip the tape: numeric value of a node or array."""
    return x.value if isinstance(x, Node) else np.asarray(x)
