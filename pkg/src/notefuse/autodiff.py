"""Reverse-mode automatic differentiation over numpy float64 arrays.

Implements exactly the op set the note-embedding network needs:
broadcast arithmetic, matrix products, valid-mode strided 1-D
convolution, softmax, ReLU, max-reduction, dropout, embedding-column
lookup, and the Huber / logistic loss reductions. Gradients are
accumulated by walking the tape in reverse topological order.

Everything is float64. The test suite compares analytic gradients
against central finite differences at tolerances single precision
cannot meet, and checkpoint determinism requires exact arithmetic
reproducibility.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "as_tensor",
    "concat",
    "stack_rows",
    "relu",
    "softmax",
    "max_along",
    "conv1d",
    "lookup",
    "dropout",
    "huber_sum",
    "bce_with_logits",
    "numerical_grad",
    "max_relative_error",
    "gradcheck",
]


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """A node in the computation graph wrapping a float64 ndarray.

    `requires_grad` is set on leaves the caller wants gradients for and
    propagates to every node computed from them. `backward()` on a
    scalar fills `.grad` on all such nodes.
    """

    __slots__ = ("_data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = data
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def data(self) -> np.ndarray:
        return self._data

    @data.setter
    def data(self, value):
        # numpy returns scalars from 0-d arithmetic; normalize every
        # rebinding (optimizer steps, state loading, test perturbations)
        # back to a mutable float64 ndarray.
        self._data = _as_array(value)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------
    # operators
    # ------------------------------------------------------------------

    def __add__(self, other):
        return _add(self, as_tensor(other))

    __radd__ = __add__

    def __mul__(self, other):
        return _mul(self, as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return _neg(self)

    def __sub__(self, other):
        return _add(self, _neg(as_tensor(other)))

    def __rsub__(self, other):
        return _add(as_tensor(other), _neg(self))

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division only supported by python scalars")
        return _mul(self, as_tensor(1.0 / float(other)))

    def __matmul__(self, other):
        return _matmul(self, as_tensor(other))

    def __getitem__(self, idx):
        return _getitem(self, idx)

    @property
    def T(self):
        return _transpose(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _reshape(self, shape)

    def sum(self, axis=None):
        return _sum(self, axis)

    # ------------------------------------------------------------------
    # backward pass
    # ------------------------------------------------------------------

    def backward(self):
        if self.data.shape != ():
            raise ValueError("backward() expects a scalar; got shape %r" % (self.data.shape,))
        # Iterative post-order DFS so deep chains cannot hit the recursion limit.
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones((), dtype=np.float64)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


class Parameter(Tensor):
    """A named trainable leaf."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray):
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to `shape`, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ----------------------------------------------------------------------
# primitive ops
# ----------------------------------------------------------------------


def _add(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, (a, b), backward)


def _mul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), backward)


def _neg(a: Tensor) -> Tensor:
    def backward(g):
        _accum(a, -g)

    return _make(-a.data, (a,), backward)


def _matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data

    def backward(g):
        if ad.ndim == 1 and bd.ndim == 1:  # dot product
            _accum(a, g * bd)
            _accum(b, g * ad)
        elif ad.ndim == 1:  # (n,) @ (n,k) -> (k,)
            _accum(a, bd @ g)
            _accum(b, np.outer(ad, g))
        elif bd.ndim == 1:  # (m,n) @ (n,) -> (m,)
            _accum(a, np.outer(g, bd))
            _accum(b, ad.T @ g)
        else:  # (m,n) @ (n,k) -> (m,k)
            _accum(a, g @ bd.T)
            _accum(b, ad.T @ g)

    return _make(ad @ bd, (a, b), backward)


def _getitem(a: Tensor, idx) -> Tensor:
    # Basic indexing only (ints/slices/tuples thereof): positions are
    # unique, so plain assignment scatters the gradient correctly.
    out = a.data[idx]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[idx] = g
            _accum(a, full)

    return _make(np.asarray(out), (a,), backward)


def _transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError("T is defined for 2-D tensors only")

    def backward(g):
        _accum(a, g.T)

    return _make(a.data.T.copy(), (a,), backward)


def _reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape

    def backward(g):
        _accum(a, g.reshape(old))

    return _make(a.data.reshape(shape), (a,), backward)


def _sum(a: Tensor, axis) -> Tensor:
    def backward(g):
        if a.requires_grad:
            if axis is None:
                _accum(a, np.broadcast_to(g, a.data.shape))
            else:
                _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape))

    return _make(a.data.sum(axis=axis), (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in ts]
    data = np.concatenate([t.data for t in ts], axis=axis)

    def backward(g):
        offset = 0
        for t, s in zip(ts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + s)
            _accum(t, g[tuple(sl)])
            offset += s

    return _make(data, tuple(ts), backward)


def stack_rows(rows) -> Tensor:
    """Stack 1-D tensors of equal length into a (len(rows), d) matrix."""
    return concat([r.reshape(1, r.data.shape[0]) for r in rows], axis=0)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g):
        _accum(a, g * mask)

    return _make(a.data * mask, (a,), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            dot = (g * y).sum(axis=axis, keepdims=True)
            _accum(a, y * (g - dot))

    return _make(y, (a,), backward)


def max_along(a: Tensor, axis: int) -> Tensor:
    """Max-reduce one axis; on ties the gradient routes to the first max."""
    idx = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    data = np.take_along_axis(a.data, idx, axis).squeeze(axis)

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.put_along_axis(full, idx, np.expand_dims(g, axis), axis)
            _accum(a, full)

    return _make(data, (a,), backward)


def conv1d(x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
    """Valid-mode 1-D convolution (NN convention, i.e. cross-correlation).

    x: (C_in, L), w: (C_out, C_in, v) -> (C_out, (L - v)//stride + 1).
    Bias is not fused; add it afterwards so per-position and per-channel
    bias shapes both work through broadcasting.
    """
    xd, wd = x.data, w.data
    c_in, length = xd.shape
    c_out, c_in_w, v = wd.shape
    if c_in != c_in_w:
        raise ValueError(f"channel mismatch: input has {c_in}, kernel expects {c_in_w}")
    if length < v:
        raise ValueError(f"input length {length} shorter than kernel size {v}")
    windows = np.lib.stride_tricks.sliding_window_view(xd, v, axis=1)[:, ::stride, :]
    out = np.einsum("oiv,ilv->ol", wd, windows)

    def backward(g):
        if w.requires_grad:
            _accum(w, np.einsum("ol,ilv->oiv", g, windows))
        if x.requires_grad:
            gx = np.zeros_like(xd)
            for t in range(g.shape[1]):
                gx[:, t * stride : t * stride + v] += np.tensordot(g[:, t], wd, axes=(0, 0))
            _accum(x, gx)

    return _make(out, (x, w), backward)


def lookup(table: Tensor, ids, pad_id: int = 0) -> Tensor:
    """Select columns of `table` (d, V) by `ids` (n,) -> (d, n).

    `pad_id` yields an all-zero column, and gradient flows only into the
    non-pad columns actually selected.
    """
    ids = np.asarray(ids, dtype=np.int64)
    d, vocab = table.data.shape
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise IndexError(f"token id out of range [0, {vocab}): {ids.min()}..{ids.max()}")
    keep = ids != pad_id
    out = table.data[:, ids] * keep

    def backward(g):
        if table.requires_grad:
            full = np.zeros_like(table.data)
            np.add.at(full.T, ids[keep], g.T[keep])
            _accum(table, full)

    return _make(out, (table,), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout with a caller-supplied generator. rate=0 is identity."""
    if rate <= 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1): {rate}")
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)

    def backward(g):
        _accum(x, g * mask)

    return _make(x.data * mask, (x,), backward)


def huber_sum(x: Tensor) -> Tensor:
    """Sum of per-coordinate smooth-L1: 0.5 t^2 if |t| <= 1 else |t| - 0.5."""
    t = x.data
    small = np.abs(t) <= 1.0
    data = np.where(small, 0.5 * t * t, np.abs(t) - 0.5).sum()

    def backward(g):
        _accum(x, g * np.clip(t, -1.0, 1.0))

    return _make(data, (x,), backward)


def bce_with_logits(z: Tensor, targets) -> Tensor:
    """Summed binary cross-entropy on logits, numerically stable."""
    zd = z.data
    y = _as_array(targets)
    data = (np.maximum(zd, 0.0) - zd * y + np.log1p(np.exp(-np.abs(zd)))).sum()

    def backward(g):
        _accum(z, g * (1.0 / (1.0 + np.exp(-zd)) - y))

    return _make(data, (z,), backward)


# ----------------------------------------------------------------------
# finite-difference checking
# ----------------------------------------------------------------------


def numerical_grad(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f() w.r.t. x, perturbed in place."""
    g = np.zeros_like(x)
    flat, gf = x.ravel(), g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * eps)
    return g


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Elementwise |a - n| / max(|a|, |n|, floor), reduced by max."""
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def gradcheck(loss_fn, tensors: dict, eps: float = 1e-5) -> dict:
    """Max relative error between analytic and central-difference gradients.

    `loss_fn()` must rebuild the graph from the tensors' current `.data`
    and return a scalar Tensor. Returns {name: max_relative_error}.
    """
    for t in tensors.values():
        t.grad = None
    loss_fn().backward()
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in tensors.items()
    }
    errors = {}
    for name, t in tensors.items():
        numeric = numerical_grad(lambda: loss_fn().item(), t.data, eps=eps)
        errors[name] = max_relative_error(analytic[name], numeric)
    return errors
