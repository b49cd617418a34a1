"""Define-by-run computation graph with reverse-mode differentiation.

Only the handful of operations the subspace clustering network needs are
supported. Each method on :class:`Graph` evaluates its operation eagerly,
appends a node holding the cached output and returns the node id; ids are
list positions, so the node list is always in topological order.
"""

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ShapeError
from . import ops


@dataclass
class Node:
    kind: str
    inputs: tuple
    value: np.ndarray
    attrs: dict = field(default_factory=dict)


class Graph:
    """Tape of evaluated operations plus a registry of named parameters."""

    def __init__(self):
        self.nodes = []
        self.params = {}

    def _push(self, kind, inputs, value, **attrs):
        self.nodes.append(Node(kind, tuple(inputs), value, attrs))
        return len(self.nodes) - 1

    def value(self, node):
        return self.nodes[node].value

    def parameter(self, name, value):
        """Register a trainable tensor under ``name``."""
        if name in self.params:
            raise KeyError(f"parameter {name!r} already registered")
        node = self._push("param", (), ops.as_tensor(value), name=name)
        self.params[name] = node
        return node

    def constant(self, value):
        return self._push("const", (), ops.as_tensor(value))

    def conv2d_s2(self, x, kernel, bias):
        y = ops.conv2d_s2(self.value(x), self.value(kernel), self.value(bias))
        return self._push("conv2d_s2", (x, kernel, bias), y)

    def convT2d_s2(self, x, kernel, bias, target_hw):
        y = ops.convT2d_s2(self.value(x), self.value(kernel), self.value(bias), target_hw)
        return self._push("convT2d_s2", (x, kernel, bias), y, target_hw=tuple(target_hw))

    def relu(self, x):
        return self._push("relu", (x,), ops.relu(self.value(x)))

    def matmul(self, a, b):
        return self._push("matmul", (a, b), ops.matmul(self.value(a), self.value(b)))

    def reshape(self, x, shape):
        return self._push("reshape", (x,), self.value(x).reshape(shape))

    def add(self, a, b):
        va, vb = self.value(a), self.value(b)
        if va.shape != vb.shape:
            raise ShapeError(f"add: shapes {va.shape} and {vb.shape} differ")
        return self._push("add", (a, b), va + vb)

    def sub(self, a, b):
        va, vb = self.value(a), self.value(b)
        if va.shape != vb.shape:
            raise ShapeError(f"sub: shapes {va.shape} and {vb.shape} differ")
        return self._push("sub", (a, b), va - vb)

    def scale(self, x, factor):
        return self._push("scale", (x,), float(factor) * self.value(x), factor=float(factor))

    def frobenius_sq(self, x):
        return self._push("frobenius_sq", (x,), np.array(ops.frobenius_sq(self.value(x))))

    def l1_sum(self, x):
        return self._push("l1_sum", (x,), np.array(ops.l1_sum(self.value(x))))


def _vjp(graph, node, grad):
    """Return the gradient contributions of ``node`` to each of its inputs."""
    val = graph.value
    kind, inputs = node.kind, node.inputs
    if kind == "conv2d_s2":
        x, k, _ = inputs
        return ops.conv2d_s2_vjp(grad, val(x), val(k))
    if kind == "convT2d_s2":
        x, k, _ = inputs
        return ops.convT2d_s2_vjp(grad, val(x), val(k))
    if kind == "relu":
        return (grad * (node.value > 0),)
    if kind == "matmul":
        a, b = inputs
        return grad @ val(b).T, val(a).T @ grad
    if kind == "reshape":
        return (grad.reshape(val(inputs[0]).shape),)
    if kind == "add":
        return grad, grad
    if kind == "sub":
        return grad, -grad
    if kind == "scale":
        return (node.attrs["factor"] * grad,)
    if kind == "frobenius_sq":
        return (2.0 * grad * val(inputs[0]),)
    if kind == "l1_sum":
        return (grad * ops.sign0(val(inputs[0])),)
    raise NotImplementedError(kind)


def backward(graph, loss_node):
    """Reverse-mode sweep from a scalar node.

    Returns
    -------
    dict
        Parameter name -> gradient array with the parameter's shape. Parameters
        the loss does not depend on receive zeros.
    """
    loss = graph.value(loss_node)
    if loss.size != 1:
        raise ShapeError(f"loss node must be scalar, got shape {loss.shape}")
    grads = {loss_node: np.ones_like(loss)}
    for i in range(loss_node, -1, -1):
        g = grads.pop(i, None)
        node = graph.nodes[i]
        if g is None or not node.inputs:
            if node.kind == "param":
                grads[i] = g
            continue
        for src, contrib in zip(node.inputs, _vjp(graph, node, g)):
            if src in grads and grads[src] is not None:
                grads[src] = grads[src] + contrib
            else:
                grads[src] = contrib
    out = {}
    for name, nid in graph.params.items():
        g = grads.get(nid)
        out[name] = np.zeros_like(graph.value(nid)) if g is None else np.ascontiguousarray(g)
    return out
