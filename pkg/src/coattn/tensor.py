"""Minimal dense float64 tensor with reverse-mode automatic differentiation.

Only the fixed operation set needed by the pair-attention computation graph
is provided: matmul, column softmax, sigmoid, ReLU, global average pooling,
channel-broadcast multiply, 2-D convolution, elementwise add, reshape,
transpose and a numerically stable sigmoid cross entropy. Each operation
records a backward closure; `backward()` walks the graph in reverse
topological order. A central finite-difference oracle is included for
gradient verification.
"""

from __future__ import annotations

import struct
from typing import BinaryIO, Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, ParseError

Array = np.ndarray


class Tensor:
    """Node in the computation graph: a float64 array plus gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple = (), op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward: Callable[[], None] | None = None
        self.op = op

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, scalar: float) -> "Tensor":
        return scale(self, float(scalar))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, op={self.op!r})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on non-scalar tensor {self.data.shape}")
        return float(self.data.reshape(()))

    def backward(self) -> None:
        backward(self)


class Graph:
    """Reverse topological view of the graph reachable from an output node."""

    def __init__(self, nodes: list):
        self.nodes = nodes  # topological order: parents precede consumers

    @classmethod
    def from_output(cls, out: Tensor) -> "Graph":
        order: list = []
        seen: set = set()
        stack: list = [(out, False)]
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
        return cls(order)


def backward(loss: Tensor) -> None:
    """Accumulate gradients of a scalar loss into every reachable node.

    A second call on the same node is rejected: gradients would silently
    double-accumulate.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got {loss.shape}")
    if getattr(loss, "grad", None) is not None:
        raise ContractError("backward() already called on this node; "
                            "rebuild the graph or zero gradients first")
    graph = Graph.from_output(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(graph.nodes):
        if node._backward is not None and node.requires_grad and node.grad is not None:
            node._backward()


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# primitive operations
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data, _parents=(a, b), op="add")

    def _bw():
        if a.requires_grad:
            a._accumulate(out.grad)
        if b.requires_grad:
            b._accumulate(out.grad)
    out._backward = _bw
    return out


def add_constant(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data + c, _parents=(a,), op="add_constant")

    def _bw():
        if a.requires_grad:
            a._accumulate(out.grad)
    out._backward = _bw
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c, _parents=(a,), op="scale")

    def _bw():
        if a.requires_grad:
            a._accumulate(out.grad * c)
    out._backward = _bw
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"matmul: 2-D operands required, got "
                             f"{a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dims disagree, {a.shape} vs {b.shape}")
    out = Tensor(a.data @ b.data, _parents=(a, b), op="matmul")

    def _bw():
        if a.requires_grad:
            a._accumulate(out.grad @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ out.grad)
    out._backward = _bw
    return out


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose: 2-D tensor required, got {a.shape}")
    out = Tensor(a.data.T.copy(), _parents=(a,), op="transpose")

    def _bw():
        if a.requires_grad:
            a._accumulate(out.grad.T)
    out._backward = _bw
    return out


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.data.size:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}")
    out = Tensor(a.data.reshape(shape), _parents=(a,), op="reshape")

    def _bw():
        if a.requires_grad:
            a._accumulate(out.grad.reshape(a.shape))
    out._backward = _bw
    return out


def softmax_columns(x: Tensor) -> Tensor:
    """Column-wise softmax with per-column max subtraction for stability."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"softmax_columns: 2-D tensor required, got {x.shape}")
    shifted = x.data - x.data.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=0, keepdims=True)
    out = Tensor(y, _parents=(x,), op="softmax_columns")

    def _bw():
        if x.requires_grad:
            g = out.grad
            x._accumulate(y * (g - (g * y).sum(axis=0, keepdims=True)))
    out._backward = _bw
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    d = x.data
    y = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                 np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = Tensor(y, _parents=(x,), op="sigmoid")

    def _bw():
        if x.requires_grad:
            x._accumulate(out.grad * y * (1.0 - y))
    out._backward = _bw
    return out


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0), _parents=(x,), op="relu")

    def _bw():
        if x.requires_grad:
            x._accumulate(out.grad * mask)
    out._backward = _bw
    return out


def gap(s: Tensor) -> Tensor:
    """Global average pooling: per-channel spatial mean of a K×H×W map."""
    s = _as_tensor(s)
    if s.data.ndim != 3:
        raise DimensionError(f"gap: K×H×W tensor required, got {s.shape}")
    k, h, w = s.shape
    if h * w < 1:
        raise DimensionError("gap: empty spatial extent")
    out = Tensor(s.data.mean(axis=(1, 2)), _parents=(s,), op="gap")

    def _bw():
        if s.requires_grad:
            s._accumulate(np.broadcast_to(out.grad[:, None, None] / (h * w),
                                          s.shape).copy())
    out._backward = _bw
    return out


def elementwise_mul_broadcast(f: Tensor, a: Tensor) -> Tensor:
    """f[c,h,w] * a[h,w]: attention map copied along the channel dimension."""
    f, a = _as_tensor(f), _as_tensor(a)
    if f.data.ndim != 3 or a.data.ndim != 2 or f.shape[1:] != a.shape:
        raise DimensionError(f"elementwise_mul_broadcast: spatial shapes "
                             f"{f.shape} vs {a.shape}")
    out = Tensor(f.data * a.data[None], _parents=(f, a), op="mul_broadcast")

    def _bw():
        if f.requires_grad:
            f._accumulate(out.grad * a.data[None])
        if a.requires_grad:
            a._accumulate((out.grad * f.data).sum(axis=0))
    out._backward = _bw
    return out


def _im2col(xp: Array, k: int, stride: int, ho: int, wo: int) -> Array:
    cin = xp.shape[0]
    cols = np.empty((cin, k, k, ho, wo), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xp[:, i:i + stride * ho:stride,
                               j:j + stride * wo:stride]
    return cols.reshape(cin * k * k, ho * wo)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None,
           stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation of a Cin×H×W input with a Cout×Cin×k×k kernel."""
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.data.ndim != 3 or kernel.data.ndim != 4:
        raise DimensionError(f"conv2d: need Cin×H×W and Cout×Cin×k×k, got "
                             f"{x.shape} and {kernel.shape}")
    cout, cin, k, k2 = kernel.shape
    if k != k2 or k % 2 == 0:
        raise DimensionError(f"conv2d: square odd kernel required, got {k}×{k2}")
    if x.shape[0] != cin:
        raise DimensionError(f"conv2d: input channels {x.shape[0]} != kernel "
                             f"Cin {cin}")
    _, h, w = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d: nonpositive output extent {ho}×{wo}")
    if bias is not None and bias.shape != (cout,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} != ({cout},)")

    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)))
    cols = _im2col(xp, k, stride, ho, wo)
    kmat = kernel.data.reshape(cout, cin * k * k)
    y = kmat @ cols
    if bias is not None:
        y = y + bias.data[:, None]
    parents = (x, kernel) if bias is None else (x, kernel, bias)
    out = Tensor(y.reshape(cout, ho, wo), _parents=parents, op="conv2d")

    def _bw():
        gmat = out.grad.reshape(cout, ho * wo)
        if kernel.requires_grad:
            kernel._accumulate((gmat @ cols.T).reshape(kernel.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(gmat.sum(axis=1))
        if x.requires_grad:
            dcols = (kmat.T @ gmat).reshape(cin, k, k, ho, wo)
            dxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    dxp[:, i:i + stride * ho:stride,
                        j:j + stride * wo:stride] += dcols[:, i, j]
            x._accumulate(dxp[:, pad:pad + h, pad:pad + w])
    out._backward = _bw
    return out


def sigmoid_ce(scores: Tensor, target: Array) -> Tensor:
    """Mean sigmoid cross entropy of logits against a {0,1} target vector.

    Computed in the logit form max(s,0) - s*t + log(1+exp(-|s|)), which never
    evaluates log of a saturated sigmoid.
    """
    scores = _as_tensor(scores)
    t = np.asarray(target, dtype=np.float64)
    if scores.data.ndim != 1 or scores.shape != t.shape:
        raise DimensionError(f"sigmoid_ce: scores {scores.shape} vs target "
                             f"{t.shape}")
    s = scores.data
    k = s.shape[0]
    per = np.maximum(s, 0.0) - s * t + np.log1p(np.exp(-np.abs(s)))
    out = Tensor(per.mean(), _parents=(scores,), op="sigmoid_ce")

    def _bw():
        if scores.requires_grad:
            sig = np.where(s >= 0, 1.0 / (1.0 + np.exp(-np.abs(s))),
                           np.exp(-np.abs(s)) / (1.0 + np.exp(-np.abs(s))))
            scores._accumulate(out.grad * (sig - t) / k)
    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# finite-difference oracle
# ---------------------------------------------------------------------------

def finite_diff_grad(f: Callable[[Array], float], x: Array,
                     eps: float = 1e-5) -> Array:
    """Central finite differences of a scalar function, element by element."""
    if eps <= 0:
        raise ContractError(f"finite_diff_grad: eps must be positive, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * eps)
    return g


def max_rel_error(analytic: Array, numeric: Array) -> float:
    """Elementwise |a-b| / max(|a|, |b|, 1), reduced to the maximum."""
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


# ---------------------------------------------------------------------------
# binary serialization: u32 rank, u32 dims, f64 payload, little-endian
# ---------------------------------------------------------------------------

def write_array(fh: BinaryIO, arr: Array) -> None:
    # note: order="C" (not ascontiguousarray) so 0-d arrays keep their rank
    a = np.asarray(arr, dtype="<f8", order="C")
    fh.write(struct.pack("<I", a.ndim))
    fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
    fh.write(a.tobytes())


def read_array(fh: BinaryIO) -> Array:
    head = fh.read(4)
    if len(head) != 4:
        raise ParseError("tensor header truncated")
    rank, = struct.unpack("<I", head)
    dims_raw = fh.read(4 * rank)
    if len(dims_raw) != 4 * rank:
        raise ParseError("tensor dims truncated")
    dims = struct.unpack(f"<{rank}I", dims_raw) if rank else ()
    count = int(np.prod(dims)) if rank else 1
    payload = fh.read(8 * count)
    if len(payload) != 8 * count:
        raise ParseError("tensor payload truncated")
    return np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
