"""Dense float tensors recorded on a per-thread reverse-mode tape.

Every op that touches a tensor with ``requires_grad`` appends a node to the
active tape. Nodes are appended in creation order, so walking the tape
backwards is a valid reverse topological order.
"""
from __future__ import annotations

import contextlib
import math
import threading

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when a forward op produces NaN or Inf."""


_local = threading.local()


def _state():
    if not hasattr(_local, "tape"):
        _local.tape = Tape()
        _local.grad_enabled = True
        _local.dtype = np.float32
    return _local


def default_dtype():
    return _state().dtype


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the dtype used for new tensors (float32 / float64)."""
    st = _state()
    prev = st.dtype
    st.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        st.dtype = prev


@contextlib.contextmanager
def no_grad():
    st = _state()
    prev = st.grad_enabled
    st.grad_enabled = False
    try:
        yield
    finally:
        st.grad_enabled = prev


def grad_enabled() -> bool:
    return _state().grad_enabled


class Tape:
    """Ordered list of recorded ops: (output, inputs, backward closure)."""

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def record(self, out, parents, backward_fn):
        out._node = len(self.nodes)
        self.nodes.append((out, parents, backward_fn))

    def reset(self):
        for out, _, _ in self.nodes:
            out._node = None
        self.nodes = []

    def __len__(self):
        return len(self.nodes)


def get_tape() -> Tape:
    return _state().tape


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        dt = dtype or default_dtype()
        arr = np.asarray(data)
        if arr.dtype != dt:
            arr = arr.astype(dt)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._node: int | None = None

    # basic introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __len__(self):
        return len(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype.type)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self, retain_graph: bool = False):
        return backward(self, retain_graph=retain_graph)

    # operators -------------------------------------------------------------
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

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _make(data, parents, backward_fn, name):
    if not np.isfinite(data).all():
        raise NonFiniteError(f"non-finite values produced by {name}")
    needs = any(p.requires_grad for p in parents) and grad_enabled()
    out = Tensor(data, requires_grad=needs, dtype=data.dtype.type)
    if needs:
        get_tape().record(out, parents, backward_fn)
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    nlead = grad.ndim - len(shape)
    if nlead > 0:
        grad = grad.sum(axis=tuple(range(nlead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def backward(loss: Tensor, retain_graph: bool = False) -> dict[int, np.ndarray]:
    """Propagate d(loss)/d(.) through the tape; returns {id(leaf): grad}.

    By default the tape is cleared afterwards; pass ``retain_graph`` to keep
    it for another call.
    """
    if loss.data.size != 1 or loss.ndim != 0:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = get_tape()
    if loss._node is None:
        raise ValueError("loss is not on the tape (no grad-requiring inputs?)")
    for out, _, _ in tape.nodes[:loss._node + 1]:
        out.grad = None
    loss.grad = np.ones_like(loss.data)
    leaves: dict[int, Tensor] = {}
    for i in range(loss._node, -1, -1):
        out, parents, fn = tape.nodes[i]
        for p in parents:
            if p.requires_grad and p._node is None:
                leaves[id(p)] = p
        if out.grad is None:
            continue
        grads = fn(out.grad)
        for p, g in zip(parents, grads):
            if g is None or not p.requires_grad:
                continue
            if p.grad is None:
                p.grad = np.array(g, dtype=p.data.dtype, copy=True)
            else:
                p.grad = p.grad + g
    for leaf in leaves.values():
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
    if not retain_graph:
        tape.reset()
    return {k: v.grad for k, v in leaves.items()}


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)), "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd

    def fn(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)

    return _make(out, (a, b), fn, "div")


def power(a, p: float):
    a = as_tensor(a)
    ad = a.data
    return _make(ad ** p, (a,), lambda g: (g * p * ad ** (p - 1),), "pow")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def fn(g):
        if bd.ndim == 1:
            ga = g[..., None] * bd
            gb = (ad * g[..., None]).reshape(-1, bd.shape[0]).sum(0)
            return _unbroadcast(ga, ad.shape), gb
        if ad.ndim == 1:
            ga = (g[..., None, :] * bd).sum(-1).reshape(-1, ad.shape[0]).sum(0)
            gb = ad[:, None] * g[..., None, :]
            return ga, _unbroadcast(gb, bd.shape)
        ga = g @ np.swapaxes(bd, -1, -2)
        if bd.ndim == 2:
            # shared weight matrix: fold all leading dims into one GEMM
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return _unbroadcast(ga, ad.shape), gb
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _make(ad @ bd, (a, b), fn, "matmul")


# ---------------------------------------------------------------------------
# reductions and shape ops


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.shape

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _make(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), fn, "sum")


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[i] for i in axes]))
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def swapaxes(a, i, j):
    axes = list(range(as_tensor(a).ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, tuple(axes))


def getitem(a, idx):
    a = as_tensor(a)
    if isinstance(idx, Tensor):
        idx = idx.data.astype(np.int64)
    shape, dt = a.shape, a.data.dtype

    def fn(g):
        full = np.zeros(shape, dtype=dt)
        np.add.at(full, idx, g)
        return (full,)

    return _make(np.array(a.data[idx]), (a,), fn, "getitem")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def fn(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), fn, "concat")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def fn(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), fn, "stack")


def broadcast_to(a, shape):
    a = as_tensor(a)
    old = a.shape
    return _make(np.array(np.broadcast_to(a.data, shape)), (a,),
                 lambda g: (_unbroadcast(g, old),), "broadcast_to")


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    a = as_tensor(a)
    ad = a.data
    with np.errstate(divide="ignore"):
        out = np.log(ad)
    return _make(out, (a,), lambda g: (g / ad,), "log")


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1 - out * out),), "tanh")


def sigmoid(a):
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(out, (a,), lambda g: (g * out * (1 - out),), "sigmoid")


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


_GELU_C = math.sqrt(2.0 / math.pi)  # Python float: keeps float32 inputs float32


def gelu(a):
    """tanh approximation of GELU."""
    a = as_tensor(a)
    x = a.data
    x2 = x * x
    inner = _GELU_C * (x + 0.044715 * x2 * x)
    th = np.tanh(inner)
    out = 0.5 * x * (1 + th)

    def fn(g):
        dinner = _GELU_C * (1 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1 + th) + 0.5 * x * (1 - th * th) * dinner),)

    return _make(out, (a,), fn, "gelu")


def absolute(a):
    a = as_tensor(a)
    sgn = np.sign(a.data)
    return _make(np.abs(a.data), (a,), lambda g: (g * sgn,), "abs")


def clip(a, lo, hi):
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clip")


def smooth_l1(a, beta: float = 1.0):
    """Elementwise Huber-style loss with the quadratic/linear transition at ``beta``."""
    a = as_tensor(a)
    x = a.data
    ax = np.abs(x)
    quad = ax < beta
    out = np.where(quad, 0.5 * x * x / beta, ax - 0.5 * beta)
    return _make(out, (a,), lambda g: (g * np.where(quad, x / beta, np.sign(x)),), "smooth_l1")


def softmax(a, axis=-1):
    a = as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise ValueError(f"axis {axis} out of range for {a.ndim}-d tensor")
    x = a.data
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), fn, "softmax")


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    sm = np.exp(out)
    return _make(out, (a,), lambda g: (g - sm * g.sum(axis=axis, keepdims=True),), "log_softmax")


def layer_norm(a, eps: float = 1e-5):
    """Normalize the last axis to zero mean / unit variance (no affine)."""
    a = as_tensor(a)
    x = a.data
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    out = xc * inv

    def fn(g):
        gm = g.mean(-1, keepdims=True)
        gxm = (g * out).mean(-1, keepdims=True)
        return (inv * (g - gm - out * gxm),)

    return _make(out, (a,), fn, "layer_norm")


def l2_normalize(a, axis=-1, eps: float = 1e-12):
    """x / sqrt(|x|^2 + eps); maps a zero vector to zero instead of NaN."""
    a = as_tensor(a)
    return a / sqrt(tsum(a * a, axis=axis, keepdims=True) + eps)


def where(cond, a, b):
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    sa, sb = a.shape, b.shape
    return _make(np.where(cond, a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * cond, sa), _unbroadcast(g * ~cond, sb)), "where")
