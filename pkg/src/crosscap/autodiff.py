"""Dense-tensor engine with reverse-mode automatic differentiation.

Double precision only, eager define-by-run graphs rebuilt on every step,
and no implicit broadcasting: elementwise ops demand identical shapes and
any shape adaptation happens through explicit constants. Every op checks
its own output so a NaN/Inf surfaces at the node that produced it.
"""

from __future__ import annotations

import hashlib
from contextlib import contextmanager

import numpy as np
from scipy.special import expit

from .errors import ContractError, DimensionError, NumericError

_grad_enabled = True


@contextmanager
def no_grad():
    """Skip graph construction inside the block (decoding, evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A float64 array plus its position in the reverse-mode graph.

    Leaf tensors are created directly; interior nodes are created by the
    op functions below, which record the op kind, the parent nodes and a
    closure computing the parents' adjoint contributions.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "op", "parents", "_grad_fn")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NumericError(f"leaf tensor {name or ''} contains NaN/Inf")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self.op = "leaf"
        self.parents = ()
        self._grad_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        tag = self.name or self.op
        return f"Tensor({tag}, shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; all strict-shape, see the op functions
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))


def _node(op, out, parents, grad_fn):
    """Wrap an op result; grad_fn(adjoint) returns per-parent contributions."""
    if not np.isfinite(out).all():
        raise NumericError(f"op '{op}' produced NaN/Inf (output shape {out.shape})")
    t = Tensor.__new__(Tensor)
    t.data = out
    t.grad = None
    t.name = None
    t.op = op
    if _grad_enabled and any(p.requires_grad for p in parents):
        t.requires_grad = True
        t.parents = tuple(parents)
        t._grad_fn = grad_fn
    else:
        t.requires_grad = False
        t.parents = ()
        t._grad_fn = None
    return t


def _same_shape(op, a, b):
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{op}: shapes differ: {a.data.shape} vs {b.data.shape}")


def add(a, b):
    _same_shape("add", a, b)
    return _node("add", a.data + b.data, (a, b), lambda g: (g, g))


def mul(a, b):
    _same_shape("mul", a, b)
    return _node("mul", a.data * b.data, (a, b),
                 lambda g: (g * b.data, g * a.data))


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(
            f"matmul: operands must be 2-D: {a.data.shape} vs {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul: inner extents differ: {a.data.shape} vs {b.data.shape}")
    return _node("matmul", a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g))


def sigmoid(a):
    s = expit(a.data)
    return _node("sigmoid", s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a):
    t = np.tanh(a.data)
    return _node("tanh", t, (a,), lambda g: (g * (1.0 - t * t),))


def softmax(a, axis=-1):
    x = a.data
    if not np.isfinite(x).all():
        raise NumericError("softmax: input contains NaN/Inf")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / np.sum(e, axis=axis, keepdims=True)

    def grad_fn(g):
        inner = np.sum(g * s, axis=axis, keepdims=True)
        return (s * (g - inner),)

    return _node("softmax", s, (a,), grad_fn)


def log_softmax(a, axis=-1):
    x = a.data
    if not np.isfinite(x).all():
        raise NumericError("log_softmax: input contains NaN/Inf")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    logz = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    out = shifted - logz
    s = np.exp(out)

    def grad_fn(g):
        return (g - s * np.sum(g, axis=axis, keepdims=True),)

    return _node("log_softmax", out, (a,), grad_fn)


def scale(a, c):
    """Multiply by a python scalar constant (also serves as negation)."""
    c = float(c)
    return _node("scale", a.data * c, (a,), lambda g: (g * c,))


def tsum(a):
    """Sum every element down to a 1x1 scalar tensor."""
    out = np.array([[a.data.sum()]])
    return _node("sum", out, (a,),
                 lambda g: (np.full_like(a.data, g.reshape(-1)[0]),))


def topological_order(root):
    """Nodes reachable from root, parents before children, each once."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss):
    """Reverse sweep from a scalar loss; adds adjoints into .grad.

    Each call computes one clean reverse pass over the graph (a fresh
    adjoint per node) and then accumulates it into .grad, so repeated
    calls without zero_grad sum exact per-call gradients.
    """
    if loss.data.size != 1:
        raise ContractError(
            f"backward: loss must be scalar, got shape {loss.data.shape}")
    order = topological_order(loss)
    adjoint = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = adjoint.get(id(node))
        if g is None or node._grad_fn is None:
            continue
        for parent, contrib in zip(node.parents, node._grad_fn(g)):
            if not parent.requires_grad:
                continue
            acc = adjoint.get(id(parent))
            adjoint[id(parent)] = contrib if acc is None else acc + contrib
    for node in order:
        if node.requires_grad and id(node) in adjoint:
            g = adjoint[id(node)]
            node.grad = g.copy() if node.grad is None else node.grad + g


def constant(data, name=None):
    return Tensor(data, requires_grad=False, name=name)


def one_hot(index, width):
    """1 x width row with a single 1.0; used for token lookup and NLL picks."""
    if not 0 <= index < width:
        raise ContractError(f"one_hot: index {index} outside [0, {width})")
    row = np.zeros((1, width))
    row[0, index] = 1.0
    return Tensor(row)


def tensor_seed(base_seed, name):
    """Stable per-tensor RNG seed derived from a base seed and a name."""
    digest = hashlib.sha256(f"{base_seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


INITIALIZERS = ("xavier-uniform", "normal", "zeros", "ones")


def init_array(kind, shape, seed):
    """Deterministic initial values: (kind, seed, shape) -> identical bits."""
    shape = tuple(int(s) for s in shape)
    if any(s <= 0 for s in shape):
        raise ContractError(f"init_array: non-positive extent in {shape}")
    if kind == "zeros":
        return np.zeros(shape)
    if kind == "ones":
        return np.ones(shape)
    rng = np.random.default_rng(seed)
    if kind == "xavier-uniform":
        fan_in = shape[0] if len(shape) > 1 else shape[-1]
        fan_out = shape[-1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)
    if kind == "normal":
        return rng.normal(0.0, 0.05, size=shape)
    raise ContractError(f"unknown initializer kind '{kind}'")


class ParameterRegistry:
    """Ordered name -> Tensor map for a model's learnable parameters."""

    def __init__(self):
        self._params = {}

    def create(self, name, shape, kind, base_seed):
        """Weights get the configured initializer; 1-D-style biases get zeros."""
        if name in self._params:
            raise ContractError(f"duplicate parameter name '{name}'")
        is_bias = len(shape) < 2 or shape[0] == 1
        data = init_array("zeros" if is_bias else kind, shape,
                          tensor_seed(base_seed, name))
        t = Tensor(data, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add(self, name, tensor):
        if name in self._params:
            raise ContractError(f"duplicate parameter name '{name}'")
        tensor.requires_grad = True
        tensor.name = name
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params.keys())

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def census(self):
        """Name -> shape for every registered tensor."""
        return {name: t.data.shape for name, t in self._params.items()}

    def total_count(self):
        return sum(t.data.size for t in self._params.values())
