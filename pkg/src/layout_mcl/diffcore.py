"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Values are float64 numpy arrays wrapped in Tensor nodes. Operations applied
under an active Tape record themselves in creation order (a topological
order); Tape.backward walks that list once in reverse, accumulating adjoints.
One tape per training step, discarded afterwards; no higher-order gradients.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass

import numpy as np


class DiffcoreError(Exception):
    pass


class ShapeError(DiffcoreError):
    """Raised when operand shapes do not conform for a primitive."""

    def __init__(self, primitive, shape_a, shape_b=None):
        self.primitive = primitive
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b) if shape_b is not None else None
        if self.shape_b is None:
            msg = f"{primitive}: bad operand shape {self.shape_a}"
        else:
            msg = f"{primitive}: shapes {self.shape_a} and {self.shape_b} do not conform"
        super().__init__(msg)


_TLS = threading.local()


def _active_tape():
    return getattr(_TLS, "tape", None)


class Tape:
    """Recording of primitive applications for one backward pass."""

    def __init__(self):
        self.nodes = []
        self.grads = {}
        self._outer = None

    def __enter__(self):
        self._outer = _active_tape()
        _TLS.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _TLS.tape = self._outer
        return False

    def backward(self, loss, params=None):
        """Accumulate adjoints from a scalar loss node.

        Returns a dict mapping id(tensor) -> gradient array for every leaf
        reached; if ``params`` is given, returns instead a list of gradient
        arrays aligned with it (exact zeros for parameters off the graph).
        """
        if loss.data.size != 1:
            raise DiffcoreError(f"backward root must be scalar, got shape {loss.data.shape}")
        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None or node.backward_fn is None:
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg
        self.grads = grads
        if params is not None:
            return [self.grad(p) for p in params]
        return grads

    def grad(self, t):
        g = self.grads.get(id(t))
        return np.zeros_like(t.data) if g is None else g


class Tensor:
    """Dense float64 value, optionally a recorded node of the active tape."""

    __slots__ = ("data", "parents", "backward_fn", "name")

    def __init__(self, data, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.parents = ()
        self.backward_fn = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, name={self.name!r})"

    # arithmetic sugar; plain scalars/arrays are lifted to constants
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return mul(self, _lift(-1.0))

    def __sub__(self, other):
        return add(self, -_lift(other))

    def __rsub__(self, other):
        return add(_lift(other), -self)

    def __matmul__(self, other):
        return matmul(self, other)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def abs(self):
        return absolute(self)

    def clip_min(self, lo):
        return clip_min(self, lo)

    def softmax(self, axis=-1):
        return softmax(self, axis)

    def log_softmax(self, axis=-1):
        return log_softmax(self, axis)

    def sum(self, axis=None):
        return tensor_sum(self, axis)

    def mean(self):
        return mean(self)

    def reshape(self, shape):
        return reshape(self, shape)

    def slice(self, start, stop, axis=-1):
        return slice_axis(self, start, stop, axis)


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward_fn):
    out = Tensor(data)
    tape = _active_tape()
    if tape is not None:
        out.parents = parents
        out.backward_fn = backward_fn
        tape.nodes.append(out)
    return out


def _unbroadcast(g, shape):
    # collapse gradient axes that numpy broadcasting introduced or expanded
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# forward primitives


def add(a, b):
    a, b = _lift(a), _lift(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError("add", a.shape, b.shape) from None
    return _node(data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a, b):
    a, b = _lift(a), _lift(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError("mul", a.shape, b.shape) from None
    return _node(
        data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    return _node(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def concat(tensors, axis=-1):
    tensors = [_lift(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", tensors[0].shape, tensors[-1].shape) from None
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(data, tuple(tensors), backward)


def slice_axis(a, start, stop, axis=-1):
    axis = axis % a.data.ndim
    idx = tuple(slice(start, stop) if d == axis else slice(None) for d in range(a.data.ndim))
    data = a.data[idx]

    def backward(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _node(data, (a,), backward)


def gather_rows(a, indices):
    """Select rows of a 2-D tensor by index; duplicates accumulate on backward."""
    if a.data.ndim != 2:
        raise ShapeError("gather_rows", a.shape)
    indices = np.asarray(indices, dtype=np.intp)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, indices, g)
        return (full,)

    return _node(a.data[indices], (a,), backward)


def take_per_row(a, col_indices):
    """Pick one column per row of a 2-D tensor, giving a length-B vector."""
    if a.data.ndim != 2:
        raise ShapeError("take_per_row", a.shape)
    cols = np.asarray(col_indices, dtype=np.intp)
    rows = np.arange(a.shape[0])

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (rows, cols), g)
        return (full,)

    return _node(a.data[rows, cols], (a,), backward)


def relu(a):
    return _node(np.maximum(a.data, 0.0), (a,), lambda g: (g * (a.data > 0.0),))


def sigmoid(a):
    x = a.data
    s = np.where(x >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return _node(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a):
    t = np.tanh(a.data)
    return _node(t, (a,), lambda g: (g * (1.0 - t * t),))


def exp(a):
    e = np.exp(a.data)
    return _node(e, (a,), lambda g: (g * e,))


def log(a):
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def clip_min(a, lo):
    return _node(np.maximum(a.data, lo), (a,), lambda g: (g * (a.data > lo),))


def absolute(a):
    return _node(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def softmax(a, axis=-1):
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _node(s, (a,), backward)


def log_softmax(a, axis=-1):
    z = a.data - a.data.max(axis=axis, keepdims=True)
    ls = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(ls) * g.sum(axis=axis, keepdims=True),)

    return _node(ls, (a,), backward)


def tensor_sum(a, axis=None):
    if axis is None:
        return _node(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _node(a.data.sum(axis=axis), (a,), backward)


def mean(a):
    n = a.data.size
    return _node(np.asarray(a.data.mean()), (a,), lambda g: (np.broadcast_to(g / n, a.shape).copy(),))


def reshape(a, shape):
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def conv2d(a, kernels, stride=1, padding="same"):
    """2-D convolution over (N, C, H, W) input with (F, C, kh, kw) kernels.

    "same" padding keeps ceil(H/stride) x ceil(W/stride) output; "valid"
    applies no padding.
    """
    x, k = a.data, kernels.data
    if x.ndim != 4 or k.ndim != 4 or x.shape[1] != k.shape[1]:
        raise ShapeError("conv2d", x.shape, k.shape)
    n, c, h, w = x.shape
    f, _, kh, kw = k.shape
    if padding == "same":
        ho, wo = -(-h // stride), -(-w // stride)
        ph = max((ho - 1) * stride + kh - h, 0)
        pw = max((wo - 1) * stride + kw - w, 0)
    elif padding == "valid":
        ho, wo = (h - kh) // stride + 1, (w - kw) // stride + 1
        ph = pw = 0
    else:
        raise DiffcoreError(f"conv2d: unknown padding {padding!r}")
    pt, pl = ph // 2, pw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pt, ph - pt), (pl, pw - pl)))

    patches = np.empty((n, c, kh, kw, ho, wo))
    for i in range(kh):
        for j in range(kw):
            patches[:, :, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    out = np.einsum("fcij,ncijhw->nfhw", k, patches, optimize=True)

    def backward(g):
        dk = np.einsum("nfhw,ncijhw->fcij", g, patches, optimize=True)
        dp = np.einsum("fcij,nfhw->ncijhw", k, g, optimize=True)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dp[:, :, i, j]
        return (dxp[:, :, pt : pt + h, pl : pl + w], dk)

    return _node(out, (a, kernels), backward)


def linear(x, p):
    return matmul(x, p.w) + p.b


# ---------------------------------------------------------------------------
# parameter containers and initialization


def uniform_init(rng, shape, fan_in, name=None):
    """Weight tensor drawn uniformly from +-sqrt(1/fan_in)."""
    bound = np.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), name=name)


@dataclass
class LinearParams:
    w: Tensor
    b: Tensor

    @staticmethod
    def create(rng, fan_in, fan_out, name):
        return LinearParams(
            w=uniform_init(rng, (fan_in, fan_out), fan_in, name=f"{name}.w"),
            b=Tensor(np.zeros(fan_out), name=f"{name}.b"),
        )

    def named(self):
        return [(self.w.name, self.w), (self.b.name, self.b)]


@dataclass
class GruParams:
    """Gate weights for one GRU cell, chunk order [reset | update | candidate]."""

    wx: Tensor
    wh: Tensor
    bx: Tensor
    bh: Tensor
    hidden: int

    @staticmethod
    def create(rng, input_width, hidden, name):
        return GruParams(
            wx=uniform_init(rng, (input_width, 3 * hidden), input_width, name=f"{name}.wx"),
            wh=uniform_init(rng, (hidden, 3 * hidden), hidden, name=f"{name}.wh"),
            bx=Tensor(np.zeros(3 * hidden), name=f"{name}.bx"),
            bh=Tensor(np.zeros(3 * hidden), name=f"{name}.bh"),
            hidden=hidden,
        )

    def named(self):
        return [(t.name, t) for t in (self.wx, self.wh, self.bx, self.bh)]


def gru_cell(x, h_prev, p):
    """Standard gated-recurrent update for a (B, in) step and (B, H) state."""
    hh = p.hidden
    gx = matmul(x, p.wx) + p.bx
    gh = matmul(h_prev, p.wh) + p.bh
    r = (gx.slice(0, hh) + gh.slice(0, hh)).sigmoid()
    z = (gx.slice(hh, 2 * hh) + gh.slice(hh, 2 * hh)).sigmoid()
    cand = (gx.slice(2 * hh, 3 * hh) + r * gh.slice(2 * hh, 3 * hh)).tanh()
    return (1.0 - z) * cand + z * h_prev


def bigru(sequence, fwd, bwd):
    """Run forward and backward GRU passes over a list of (B, in) steps.

    Returns (forward_states, backward_states), each aligned with the input
    sequence. The caller supplies the start token; empty sequences are an
    error.
    """
    if not sequence:
        raise DiffcoreError("bigru: empty sequence (pass the start token)")
    batch = sequence[0].shape[0]
    h = Tensor(np.zeros((batch, fwd.hidden)))
    fwd_states = []
    for x in sequence:
        h = gru_cell(x, h, fwd)
        fwd_states.append(h)
    h = Tensor(np.zeros((batch, bwd.hidden)))
    bwd_states = []
    for x in reversed(sequence):
        h = gru_cell(x, h, bwd)
        bwd_states.append(h)
    bwd_states.reverse()
    return fwd_states, bwd_states


# ---------------------------------------------------------------------------
# checkpoint container

CHECKPOINT_MAGIC = b"LMCLTNSR"
CHECKPOINT_VERSION = 1


def save_params(path, named_params):
    """Write named tensors to a versioned little-endian binary container."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(named_params)))
        for name, tensor in named_params:
            raw = name.encode("utf-8")
            arr = np.ascontiguousarray(tensor.data, dtype="<f8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_params(path):
    """Read a checkpoint container back into a name -> ndarray dict."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise DiffcoreError(f"not a checkpoint file: bad magic {magic!r}")
        version, count = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise DiffcoreError(f"unsupported checkpoint version {version}")
        out = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{rank}I", fh.read(4 * rank)) if rank else ()
            size = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(shape)
            out[name] = data.astype(np.float64)
        return out
