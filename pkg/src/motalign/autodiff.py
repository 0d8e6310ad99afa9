"""Minimal reverse-mode differentiation over float64 numpy arrays.

Operations executed inside an active :class:`Tape` are recorded together with
their local gradient rules; :func:`backward` replays the tape in reverse.
Outside a tape (or inside :func:`no_grad`) operations are plain forward
computations and produce tensors that do not require gradients.
"""

from contextlib import contextmanager

import numpy as np

from .errors import ContractError, DegenerateInputError, DimensionError

MASK_FILL = -1e9

_TAPES = []


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_leaf", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._leaf = True
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data

    def numpy(self):
        return self.data

    def is_finite(self):
        return bool(np.all(np.isfinite(self.data)))

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

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

    @property
    def T(self):
        return transpose(self, None)


class _Record:
    __slots__ = ("out", "inputs", "grad_fn", "op")

    def __init__(self, out, inputs, grad_fn, op):
        self.out = out
        self.inputs = inputs
        self.grad_fn = grad_fn
        self.op = op


class Tape:
    """Ordered record of executed operations.

    Use as a context manager; operations on tensors that require gradients
    are appended while the tape is the innermost active one.
    """

    def __init__(self):
        self.records = []
        self._outputs = set()
        self._leaves = {}

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.pop()
        return False

    def __len__(self):
        return len(self.records)

    def clear(self):
        self.records.clear()
        self._outputs.clear()
        self._leaves.clear()

    def record(self, out, inputs, grad_fn, op):
        for t in inputs:
            if t.requires_grad and t._leaf:
                self._leaves.setdefault(id(t), t)
        self.records.append(_Record(out, inputs, grad_fn, op))
        self._outputs.add(id(out))

    def __contains__(self, tensor):
        return id(tensor) in self._outputs

    @property
    def leaves(self):
        return list(self._leaves.values())


@contextmanager
def no_grad():
    _TAPES.append(None)
    try:
        yield
    finally:
        _TAPES.pop()


def active_tape():
    return _TAPES[-1] if _TAPES else None


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _wrap(value):
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(value, dtype=np.float64)
    out.grad = None
    out.requires_grad = False
    out._leaf = True
    out.name = None
    return out


def _result(value, inputs, grad_fn, op):
    out = _wrap(value)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._leaf = False
        tape.record(out, inputs, grad_fn, op)
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def backward(loss, tape):
    """Populate ``.grad`` of every leaf tensor recorded on ``tape``.

    Leaves that the loss does not depend on receive zeros. Gradients add into
    any existing ``.grad``; call ``zero_grad`` between steps.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss not in tape:
        raise ContractError("loss was not produced on this tape")
    grads = {id(loss): np.ones_like(loss.data)}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.out), None)
        if g is None:
            continue
        for t, gi in zip(rec.inputs, rec.grad_fn(g)):
            if gi is None or not t.requires_grad:
                continue
            k = id(t)
            grads[k] = grads[k] + gi if k in grads else gi
    for leaf in tape.leaves:
        g = grads.get(id(leaf))
        if g is None:
            g = np.zeros_like(leaf.data)
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g


# ---------------------------------------------------------------- elementwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _result(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
        "div",
    )


def power(a, p):
    a = as_tensor(a)
    p = float(p)
    return _result(a.data**p, (a,), lambda g: (g * p * a.data ** (p - 1.0),), "pow")


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    a = as_tensor(a)
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _result(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a):
    """Tanh-approximated GELU; smooth, so finite-difference checks stay tight."""
    a = as_tensor(a)
    x = a.data
    x2 = x * x
    inner = _GELU_C * x * (1.0 + 0.044715 * x2)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def grad_fn(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _result(out, (a,), grad_fn, "gelu")


# ----------------------------------------------------------------- reductions


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(out, (a,), grad_fn, "sum")


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / float(count))


# ------------------------------------------------------------------- shaping


def reshape(a, shape):
    a = as_tensor(a)
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _result(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def swapaxes(a, i, j):
    axes = list(range(a.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, tuple(axes))


def index(a, idx):
    """Basic or integer-array indexing; gradient scatters back with ``np.add.at``."""
    a = as_tensor(a)

    def grad_fn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _result(a.data[idx], (a,), grad_fn, "index")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _result(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, splits, axis=axis)),
        "concat",
    )


def embedding(table, ids):
    """Row lookup ``table[ids]``; ``ids`` is an integer array of any shape."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)

    def grad_fn(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (full,)

    return _result(table.data[ids], (table,), grad_fn, "embedding")


# -------------------------------------------------------------- linear algebra


def matmul(a, b):
    """Matrix product with numpy batch broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    if b.ndim == 2 and a.ndim > 2:
        # fold leading axes into rows: one GEMM instead of many small ones
        a2 = a.data.reshape(-1, a.shape[-1])
        out = (a2 @ b.data).reshape(a.shape[:-1] + (b.shape[-1],))

        def grad_fn(g):
            g2 = g.reshape(-1, g.shape[-1])
            ga = (g2 @ b.data.T).reshape(a.shape) if a.requires_grad else None
            gb = a2.T @ g2 if b.requires_grad else None
            return ga, gb

        return _result(out, (a, b), grad_fn, "matmul")

    out = a.data @ b.data

    def grad_fn(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None
        return (
            None if ga is None else _unbroadcast(ga, a.shape),
            None if gb is None else _unbroadcast(gb, b.shape),
        )

    return _result(out, (a, b), grad_fn, "matmul")


# ------------------------------------------------------------ normalisations


def softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (a,), grad_fn, "softmax")


def softmax_rows(x):
    """Row-wise softmax of a 2-D tensor (max-shifted)."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"softmax_rows expects a matrix, got shape {x.shape}")
    return softmax(x, axis=-1)


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def grad_fn(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return _result(out, (a,), grad_fn, "log_softmax")


def cross_entropy_rows(logits, targets):
    """Mean negative log-likelihood of ``targets`` under row-softmax of ``logits``."""
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy_rows expects a matrix, got shape {logits.shape}")
    n, m = logits.shape
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (n,):
        raise DimensionError(f"targets shape {targets.shape} does not match {n} rows")
    bad = np.flatnonzero((targets < 0) | (targets >= m))
    if bad.size:
        raise IndexError(f"target index {int(targets[bad[0]])} out of range [0, {m}) at row {int(bad[0])}")
    logp = log_softmax(logits, axis=-1)
    picked = index(logp, (np.arange(n), targets))
    return mean(picked) * -1.0


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalise over the last axis, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def grad_fn(g):
        lead = tuple(range(g.ndim - 1))
        gh = g * gamma.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return (gx, (g * xhat).sum(axis=lead), g.sum(axis=lead))

    return _result(out, (x, gamma, beta), grad_fn, "layer_norm")


def l2_normalize_rows(x, eps=1e-12):
    """Scale each row (last axis) to unit Euclidean norm."""
    x = as_tensor(x)
    norms = np.sqrt((x.data * x.data).sum(axis=-1, keepdims=True))
    small = np.argwhere(norms[..., 0] <= eps)
    if small.size:
        where = tuple(int(i) for i in small[0])
        row = where[0] if len(where) == 1 else where
        raise DegenerateInputError(f"row {row} has norm {float(norms[where][0]):.3g} <= {eps}")
    out = x.data / norms

    def grad_fn(g):
        return ((g - out * (g * out).sum(axis=-1, keepdims=True)) / norms,)

    return _result(out, (x,), grad_fn, "l2_normalize")


def additive_mask(mask, fill=MASK_FILL):
    """Boolean allow-mask to an additive score bias (0 allowed, ``fill`` blocked)."""
    return np.where(np.asarray(mask, dtype=bool), 0.0, fill)


def masked_scores(scores, mask, fill=MASK_FILL):
    """Add a large negative constant to attention scores outside ``mask``."""
    return add(scores, additive_mask(mask, fill))
