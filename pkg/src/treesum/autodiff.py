"""Dense-tensor reverse-mode automatic differentiation on numpy arrays.

Operations record onto the active `Tape` (a Wengert list); with no tape
active they run forward-only, which is how decoding avoids graph overhead.
The primitive set is closed and small: matmul, add/sub/mul (with numpy
broadcasting, un-broadcast on the way back), concat/narrow/reshape,
row/rows/stack_rows gathers, tanh, sigmoid, softmax, log_softmax, log,
clip, total, pick.  Every primitive checks its output for NaN/Inf and
raises `NonFiniteError` on the first occurrence.

Checkpoint container byte layout (version ``TSCKPT01``, all integers
little-endian, arrays C-order):

    8 bytes   magic b"TSCKPT01"
    u32       metadata length M
    M bytes   metadata JSON, UTF-8
    u32       parameter count P
    P records:
        u16       name length L
        L bytes   name, UTF-8
        u8        dtype code (4 = float32, 8 = float64)
        u8        ndim D
        D * u32   dimensions
        bytes     raw values, dtype-sized, little-endian
    u32       CRC-32 (zlib) of everything above
"""

from __future__ import annotations

import json
import os
import struct
import zlib

import numpy as np


class AutodiffError(Exception):
    pass


class ShapeError(AutodiffError):
    pass


class NonFiniteError(AutodiffError):
    pass


class CheckpointError(AutodiffError):
    pass


_ACTIVE_TAPE = None


class Tensor:
    """A dense array plus the bookkeeping to participate in a tape."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, dtype=None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None
                               else getattr(data, "dtype", np.float32))
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float32)
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return self.data.item()

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """A named, trainable tensor; gradients persist across tapes."""

    __slots__ = ("name",)

    def __init__(self, data, name, dtype=None):
        super().__init__(data, dtype=dtype)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


class Tape:
    """Execution-ordered record of operations; context manager activates it."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise AutodiffError("a tape is already active")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def backward(self, loss: Tensor):
        """Accumulate d(loss)/d(x) into .grad of every tensor on the tape."""
        if loss.data.ndim != 0 and loss.data.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
        loss.accumulate(np.ones_like(loss.data))
        for node in reversed(self.nodes):
            if node.grad is None or node._backward is None:
                continue
            node._backward(node.grad)
        self.nodes = []


def _make(data, parents, backward, op):
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite output of {op}")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._parents = ()
    out._backward = None
    if _ACTIVE_TAPE is not None:
        out._parents = tuple(parents)
        out._backward = backward
        _ACTIVE_TAPE.nodes.append(out)
    return out


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _unbroadcast(g, shape):
    """Sum-reduce a gradient back to the pre-broadcast shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a: Tensor, b) -> Tensor:
    b = _lift(b, a)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")

    def backward(g):
        a.accumulate(_unbroadcast(g, a.shape))
        b.accumulate(_unbroadcast(g, b.shape))
    return _make(data, (a, b), backward, "add")


def sub(a: Tensor, b) -> Tensor:
    b = _lift(b, a)
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: {a.shape} vs {b.shape}")

    def backward(g):
        a.accumulate(_unbroadcast(g, a.shape))
        b.accumulate(-_unbroadcast(g, b.shape))
    return _make(data, (a, b), backward, "sub")


def neg(a: Tensor) -> Tensor:
    def backward(g):
        a.accumulate(-g)
    return _make(-a.data, (a,), backward, "neg")


def mul(a: Tensor, b) -> Tensor:
    b = _lift(b, a)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}")

    def backward(g):
        a.accumulate(_unbroadcast(g * b.data, a.shape))
        b.accumulate(_unbroadcast(g * a.data, b.shape))
    return _make(data, (a, b), backward, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ShapeError(f"matmul supports 1-D/2-D only: {a.shape} x {b.shape}")
    try:
        data = a.data @ b.data
    except ValueError:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")

    def backward(g):
        if a.data.ndim == 2 and b.data.ndim == 2:
            a.accumulate(g @ b.data.T)
            b.accumulate(a.data.T @ g)
        elif a.data.ndim == 2 and b.data.ndim == 1:
            a.accumulate(np.outer(g, b.data))
            b.accumulate(a.data.T @ g)
        elif a.data.ndim == 1 and b.data.ndim == 2:
            a.accumulate(b.data @ g)
            b.accumulate(np.outer(a.data, g))
        else:
            a.accumulate(g * b.data)
            b.accumulate(g * a.data)
    return _make(data, (a, b), backward, "matmul")


def concat(tensors, axis=0) -> Tensor:
    tensors = list(tensors)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            "concat: " + " | ".join(str(t.shape) for t in tensors))
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g):
        start = 0
        for t, size in zip(tensors, sizes):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, start + size)
            t.accumulate(g[tuple(index)])
            start += size
    return _make(data, tensors, backward, "concat")


def narrow(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    data = a.data[index].copy()

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[index] += g
    return _make(data, (a,), backward, "narrow")


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def backward(g):
        a.accumulate(g.reshape(a.shape))
    return _make(data, (a,), backward, "reshape")


def rows(table: Tensor, indices) -> Tensor:
    """Embedding lookup: gather rows of a 2-D table."""
    idx = np.asarray(indices, dtype=np.int64)
    data = table.data[idx]

    def backward(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx, g)
    return _make(data, (table,), backward, "rows")


def row(a: Tensor, i: int) -> Tensor:
    data = a.data[i].copy()

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[i] += g
    return _make(data, (a,), backward, "row")


def stack_rows(vectors) -> Tensor:
    """Stack equal-length vectors into a matrix, one per row."""
    vectors = list(vectors)
    try:
        data = np.stack([v.data for v in vectors], axis=0)
    except ValueError:
        raise ShapeError(
            "stack_rows: " + " | ".join(str(v.shape) for v in vectors))

    def backward(g):
        for r, v in enumerate(vectors):
            v.accumulate(g[r])
    return _make(data, vectors, backward, "stack_rows")


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(g):
        a.accumulate(g * (1.0 - data * data))
    return _make(data, (a,), backward, "tanh")


def sigmoid(a: Tensor) -> Tensor:
    data = np.empty_like(a.data)
    pos = a.data >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ex = np.exp(a.data[~pos])
    data[~pos] = ex / (1.0 + ex)

    def backward(g):
        a.accumulate(g * data * (1.0 - data))
    return _make(data, (a,), backward, "sigmoid")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        a.accumulate(data * (g - inner))
    return _make(data, (a,), backward, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - lse

    def backward(g):
        soft = np.exp(data)
        a.accumulate(g - soft * g.sum(axis=axis, keepdims=True))
    return _make(data, (a,), backward, "log_softmax")


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)

    def backward(g):
        a.accumulate(g / a.data)
    return _make(data, (a,), backward, "log")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes through inside [lo, hi] inclusive."""
    data = np.clip(a.data, lo, hi)
    mask = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        a.accumulate(g * mask)
    return _make(data, (a,), backward, "clip")


def total(a: Tensor, axis=None) -> Tensor:
    data = a.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            a.accumulate(np.broadcast_to(g, a.shape).copy())
        else:
            a.accumulate(np.broadcast_to(
                np.expand_dims(g, axis), a.shape).copy())
    return _make(data, (a,), backward, "total")


def pick(a: Tensor, index: int) -> Tensor:
    """Select one coordinate of a vector as a scalar tensor."""
    if a.data.ndim != 1:
        raise ShapeError(f"pick expects a vector, got {a.shape}")
    data = a.data[index].copy()

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[index] += g
    return _make(data, (a,), backward, "pick")


def constant(value, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(value, dtype=dtype))


# ---------------------------------------------------------------------------
# LSTM cell
# ---------------------------------------------------------------------------

class LstmParams:
    """Weights of one LSTM cell: y = [x || h] @ w + b, gate order i,f,g,o."""

    def __init__(self, input_size, hidden_size, name, rng, dtype=np.float32,
                 scale=0.1):
        self.hidden_size = hidden_size
        self.w = Parameter(
            uniform_init(rng, (input_size + hidden_size, 4 * hidden_size),
                         scale, dtype), f"{name}.w")
        self.b = Parameter(np.zeros(4 * hidden_size, dtype=dtype), f"{name}.b")

    def parameters(self):
        return [self.w, self.b]


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, params: LstmParams):
    """One step of a standard LSTM; works on vectors or (batch, dim) rows."""
    n = params.hidden_size
    axis = x.data.ndim - 1
    z = add(matmul(concat([x, h], axis=axis), params.w), params.b)
    i = sigmoid(narrow(z, axis, 0, n))
    f = sigmoid(narrow(z, axis, n, 2 * n))
    g = tanh(narrow(z, axis, 2 * n, 3 * n))
    o = sigmoid(narrow(z, axis, 3 * n, 4 * n))
    c_new = add(mul(f, c), mul(i, g))
    h_new = mul(o, tanh(c_new))
    return h_new, c_new


def uniform_init(rng, shape, scale=0.1, dtype=np.float32):
    """Seeded uniform weights in [-scale, scale]; biases stay zero elsewhere."""
    return rng.uniform(-scale, scale, size=shape).astype(dtype)


def zero_grads(params):
    for p in params:
        p.zero_grad()


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def grad_check(f, params, samples_per_param=8, step=1e-5):
    """Max relative error of analytic vs central-difference gradients.

    ``f`` must be a deterministic nullary callable returning a scalar
    Tensor computed from ``params``.  Use float64 parameters; float32
    round-off swamps the comparison.  Per parameter, the coordinates with
    the largest analytic magnitude are sampled: central differences at
    this step size cannot resolve gradients below the round-off of the
    loss itself, so near-zero coordinates carry no signal.
    """
    zero_grads(params)
    with Tape() as tape:
        loss = f()
        tape.backward(loss)
    analytic = {p.name: p.grad.copy() for p in params}

    worst = 0.0
    for p in params:
        k = min(samples_per_param, p.data.size)
        magnitudes = np.abs(analytic[p.name].reshape(-1))
        coords = np.argsort(-magnitudes, kind="stable")[:k]
        for idx in coords:
            multi = np.unravel_index(idx, p.data.shape)
            keep = p.data[multi]
            p.data[multi] = keep + step
            up = f().item()
            p.data[multi] = keep - step
            down = f().item()
            p.data[multi] = keep
            numeric = (up - down) / (2.0 * step)
            a = analytic[p.name].reshape(-1)[idx]
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------

_MAGIC = b"TSCKPT01"
_DTYPE_CODES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


def save_checkpoint(path, params, metadata=None):
    """Write named parameter arrays plus a metadata record; see module doc."""
    params = list(params)
    named = {p.name: p.data for p in params}
    if len(named) != len(params):
        raise CheckpointError("duplicate parameter names")
    meta = json.dumps(metadata or {}).encode("utf-8")
    chunks = [_MAGIC, struct.pack("<I", len(meta)), meta,
              struct.pack("<I", len(named))]
    for name, array in named.items():
        encoded = name.encode("utf-8")
        code = 8 if array.dtype == np.float64 else 4
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", code, array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(
            array, dtype=_DTYPE_CODES[code]).tobytes())
    body = b"".join(chunks)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))
    os.replace(tmp, path)


def load_checkpoint(path):
    """Read a checkpoint; returns (name -> array dict, metadata dict)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(_MAGIC) + 8 or blob[:len(_MAGIC)] != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    body, footer = blob[:-4], blob[-4:]
    if struct.unpack("<I", footer)[0] != (zlib.crc32(body) & 0xFFFFFFFF):
        raise CheckpointError(f"{path}: checksum mismatch")
    view = memoryview(body)[len(_MAGIC):]

    def take(n):
        nonlocal view
        if len(view) < n:
            raise CheckpointError(f"{path}: truncated")
        chunk, view = view[:n], view[n:]
        return chunk

    meta_len = struct.unpack("<I", take(4))[0]
    metadata = json.loads(bytes(take(meta_len)).decode("utf-8"))
    count = struct.unpack("<I", take(4))[0]
    arrays = {}
    for _ in range(count):
        name_len = struct.unpack("<H", take(2))[0]
        name = bytes(take(name_len)).decode("utf-8")
        code, ndim = struct.unpack("<BB", take(2))
        if code not in _DTYPE_CODES:
            raise CheckpointError(f"{path}: unknown dtype code {code}")
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        dtype = _DTYPE_CODES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        arrays[name] = np.frombuffer(
            take(nbytes), dtype=dtype).reshape(shape).copy()
    return arrays, metadata
