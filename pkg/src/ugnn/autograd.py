"""A small reverse-mode differentiation engine over numpy arrays.

Only the primitives needed by the node-classification models are
provided. Sparse operands are treated as constants.
"""

from __future__ import annotations

import numpy as np

from .graph import Graph, SparseMatrix


class UnsupportedPrimitiveError(TypeError):
    pass


SUPPORTED = frozenset({
    "leaf", "add", "sub", "mul", "neg", "matmul", "spmm", "reciprocal", "relu",
    "leaky_relu", "sigmoid", "segment_softmax", "neighborhood_variance",
    "gather_rows", "segment_sum", "softmax_cross_entropy", "sum",
})


class Tensor:
    __slots__ = ("value", "grad", "parents", "op", "_backward", "requires_grad")

    def __init__(self, value, requires_grad: bool = False, parents=(), op: str = "leaf", backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = tuple(parents)
        self.op = op
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _make(value, parents, op, backward) -> Tensor:
    return Tensor(value, parents=parents, op=op, backward=backward)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.value + b.value, (a, b), "add",
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.value - b.value, (a, b), "sub",
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.value * b.value, (a, b), "mul",
                 lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.value, (a,), "neg", lambda g: (-g,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return g @ b.value.T, a.value.T @ g

    return _make(a.value @ b.value, (a, b), "matmul", bw)


def spmm(m: SparseMatrix, x) -> Tensor:
    """``m @ x`` with a constant sparse left operand."""
    x = as_tensor(x)
    mt = m.scipy.T.tocsr()
    return _make(np.asarray(m.scipy @ x.value), (x,), "spmm", lambda g: (np.asarray(mt @ g),))


def reciprocal(x) -> Tensor:
    x = as_tensor(x)
    out = 1.0 / x.value
    return _make(out, (x,), "reciprocal", lambda g: (-g * out * out,))


def relu(x) -> Tensor:
    x = as_tensor(x)
    on = x.value > 0
    return _make(np.where(on, x.value, 0.0), (x,), "relu", lambda g: (g * on,))


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    scale = np.where(x.value > 0, 1.0, slope)
    return _make(x.value * scale, (x,), "leaky_relu", lambda g: (g * scale,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    return _make(out, (x,), "sigmoid", lambda g: (g * out * (1.0 - out),))


def segment_softmax(scores, offsets: np.ndarray) -> Tensor:
    """Softmax within contiguous segments ``offsets[k]:offsets[k+1]`` of a 1-D tensor."""
    scores = as_tensor(scores)
    counts = np.diff(offsets)
    if np.any(counts == 0):
        raise ValueError("segment_softmax needs nonempty segments")
    seg = np.repeat(np.arange(len(counts)), counts)
    starts = offsets[:-1]
    peak = np.maximum.reduceat(scores.value, starts)[seg]
    ex = np.exp(scores.value - peak)
    out = ex / np.add.reduceat(ex, starts)[seg]

    def bw(g):
        dot = np.add.reduceat(out * g, starts)[seg]
        return (out * (g - dot),)

    return _make(out, (scores,), "segment_softmax", bw)


def neighborhood_variance(x, graph: Graph) -> Tensor:
    """Per-channel population variance of ``x`` over each self-inclusive neighborhood."""
    x = as_tensor(x)
    a_hat = graph.adjacency_self_loop
    rows, cols = a_hat.row_ids, a_hat.col_indices
    d = graph.degrees_self_loop.astype(np.float64)[:, None]
    mean = np.asarray(a_hat.scipy @ x.value) / d
    dev = x.value[cols] - mean[rows]
    out = np.add.reduceat(dev * dev, a_hat.row_offsets[:-1], axis=0) / d

    def bw(g):
        # d var_i / d x_j = 2 (x_j - mean_i) / d_i; the mean's own dependence cancels
        contrib = (2.0 * g / d)[rows] * dev
        gx = np.zeros_like(x.value)
        np.add.at(gx, cols, contrib)
        return (gx,)

    return _make(out, (x,), "neighborhood_variance", bw)


def gather_rows(x, index: np.ndarray) -> Tensor:
    x = as_tensor(x)
    index = np.asarray(index)

    def bw(g):
        gx = np.zeros_like(x.value)
        np.add.at(gx, index, g)
        return (gx,)

    return _make(x.value[index], (x,), "gather_rows", bw)


def segment_sum(x, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Scatter-add rows of ``x`` into ``num_segments`` buckets."""
    x = as_tensor(x)
    segment_ids = np.asarray(segment_ids)
    out = np.zeros((num_segments,) + x.shape[1:])
    np.add.at(out, segment_ids, x.value)
    return _make(out, (x,), "segment_sum", lambda g: (g[segment_ids],))


def softmax_cross_entropy(logits, labels: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """Mean cross-entropy of row-softmaxed ``logits`` over the rows selected by ``mask``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    idx = np.arange(logits.shape[0]) if mask is None else np.flatnonzero(mask)
    if len(idx) == 0:
        raise ValueError("cross-entropy over an empty node set")
    z = logits.value[idx]
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    y = labels[idx]
    loss = -logp[np.arange(len(idx)), y].mean()

    def bw(g):
        p = np.exp(logp)
        p[np.arange(len(idx)), y] -= 1.0
        gl = np.zeros_like(logits.value)
        gl[idx] = g * p / len(idx)
        return (gl,)

    return _make(loss, (logits,), "softmax_cross_entropy", bw)


def tsum(x) -> Tensor:
    x = as_tensor(x)
    return _make(x.value.sum(), (x,), "sum", lambda g: (np.broadcast_to(g, x.shape).copy(),))


def _topological_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d loss / d t into ``t.grad`` for every tensor reachable from ``loss``."""
    if loss.value.size != 1:
        raise ValueError("backward needs a scalar loss")
    order = _topological_order(loss)
    for node in order:
        if node.op not in SUPPORTED:
            raise UnsupportedPrimitiveError(f"no gradient rule for primitive {node.op!r}")
    grads = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.op == "leaf":
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


def gradcheck(fn, arrays: list[np.ndarray], h: float = 1e-5) -> float:
    """Largest scaled discrepancy between engine and central-difference gradients.

    ``fn`` maps a list of leaf tensors to a scalar tensor. For each input the
    error is ``max|g_engine - g_fd| / max(max|g_fd|, 1e-8)``; the maximum over
    inputs is returned.
    """
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    backward(fn(leaves))
    worst = 0.0
    for k, a in enumerate(arrays):
        engine = np.zeros_like(a) if leaves[k].grad is None else leaves[k].grad
        fd = np.zeros_like(a)
        flat = fd.reshape(-1)
        for idx in range(a.size):
            plus, minus = [x.copy() for x in arrays], [x.copy() for x in arrays]
            plus[k].reshape(-1)[idx] += h
            minus[k].reshape(-1)[idx] -= h
            fp = fn([Tensor(x) for x in plus]).value
            fm = fn([Tensor(x) for x in minus]).value
            flat[idx] = (fp - fm) / (2 * h)
        scale = max(np.abs(fd).max(initial=0.0), 1e-8)
        worst = max(worst, float(np.abs(engine - fd).max(initial=0.0) / scale))
    return worst
