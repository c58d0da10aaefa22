"""Minimal reverse-mode autodiff over numpy arrays.

Supplies exactly the ops the two regressors and their losses need: dense
and 3x3 convolutional layers, 2x2 max pooling, relu/tanh, element-wise
max and moment pooling over sets, and the scalar arithmetic used by the
loss graphs. Graphs are built define-by-run; backward() walks the tape in
reverse topological order, so gradient accumulation order is fixed and
runs are bit-reproducible.

Precision is a process-wide switch: tests and gradient checks run in
float64, training typically in float32.

Forward passes that must be *bitwise* invariant to set order (the
hemisphere-image branch) route their matmuls through a per-row 3D GEMM
(`exact_rows=True`): numpy's 2D GEMM changes blocking with the row count,
which perturbs results in the last ulp; per-slice GEMMs do not.
"""

from contextlib import contextmanager

import numpy as np

from .errors import ConfigurationError

_DEFAULT_DTYPE = np.float64


def set_default_dtype(dtype):
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ConfigurationError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype.type


def get_default_dtype():
    return _DEFAULT_DTYPE


@contextmanager
def precision(dtype):
    previous = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ConfigurationError("backward() requires a scalar output")
        topo, seen = [], set()

        def visit(t):
            if id(t) in seen or not t.requires_grad:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            topo.append(t)

        visit(self)
        for t in topo:
            t.grad = np.zeros_like(t.data)
        self.grad = np.ones_like(self.data)
        for t in reversed(topo):
            if t._backward is not None:
                t._backward(t.grad)

    # -- arithmetic ---------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data):
    return Tensor(np.array(data, dtype=_DEFAULT_DTYPE), requires_grad=True)


def _unbroadcast(grad, shape):
    """Reduce a broadcast gradient back to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data, _parents=(a, b), _backward=None)

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.data.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g, b.data.shape)

    out._backward = backward if out.requires_grad else None
    return out


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data, _parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g * b.data, a.data.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g * a.data, b.data.shape)

    out._backward = backward if out.requires_grad else None
    return out


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data / b.data, _parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g / b.data, a.data.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)

    out._backward = backward if out.requires_grad else None
    return out


def power(a, exponent):
    a = as_tensor(a)
    exponent = float(exponent)
    out = Tensor(a.data**exponent, _parents=(a,))

    def backward(g):
        a.grad += g * exponent * a.data ** (exponent - 1.0)

    out._backward = backward if out.requires_grad else None
    return out


def texp(a):
    a = as_tensor(a)
    y = np.exp(a.data)
    out = Tensor(y, _parents=(a,))

    def backward(g):
        a.grad += g * y

    out._backward = backward if out.requires_grad else None
    return out


def tsqrt(a, eps=0.0):
    """Square root; eps > 0 keeps the gradient finite at zero."""
    a = as_tensor(a)
    y = np.sqrt(a.data + eps)
    out = Tensor(y, _parents=(a,))

    def backward(g):
        a.grad += g * 0.5 / np.maximum(y, 1e-300)

    out._backward = backward if out.requires_grad else None
    return out


def tcbrt(a, grad_eps=1e-18):
    """Sign-safe cube root with a guarded gradient 1/(3 y^2 + eps)."""
    a = as_tensor(a)
    y = np.cbrt(a.data)
    out = Tensor(y, _parents=(a,))

    def backward(g):
        a.grad += g / (3.0 * y * y + grad_eps)

    out._backward = backward if out.requires_grad else None
    return out


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, 0.0), _parents=(a,))

    def backward(g):
        a.grad += g * mask

    out._backward = backward if out.requires_grad else None
    return out


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)
    out = Tensor(y, _parents=(a,))

    def backward(g):
        a.grad += g * (1.0 - y * y)

    out._backward = backward if out.requires_grad else None
    return out


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), _parents=(a,))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.grad += np.broadcast_to(g, a.data.shape)

    out._backward = backward if out.requires_grad else None
    return out


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.data.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def reshape(a, shape):
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape), _parents=(a,))

    def backward(g):
        a.grad += g.reshape(a.data.shape)

    out._backward = backward if out.requires_grad else None
    return out


def getitem(a, key):
    a = as_tensor(a)
    out = Tensor(a.data[key], _parents=(a,))

    def backward(g):
        a.grad[key] += g

    out._backward = backward if out.requires_grad else None
    return out


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), _parents=tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.grad += g[tuple(idx)]

    out._backward = backward if out.requires_grad else None
    return out


def matmul(a, b):
    """2D matrix product (fast path; row results may move by an ulp when
    the batch size changes -- use linear(exact_rows=True) where bitwise
    set invariance matters)."""
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data @ b.data, _parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a.grad += g @ b.data.T
        if b.requires_grad:
            b.grad += a.data.T @ g

    out._backward = backward if out.requires_grad else None
    return out


def linear(x, w, b, exact_rows=False):
    """y = x @ w + b for x (N, in), w (in, out), b (out,)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.shape[-1] != w.data.shape[0]:
        raise ConfigurationError(
            f"linear: inner dims disagree {x.data.shape} @ {w.data.shape}"
        )
    if exact_rows:
        y = np.matmul(x.data[:, None, :], w.data)[:, 0, :] + b.data
    else:
        y = x.data @ w.data + b.data
    out = Tensor(y, _parents=(x, w, b))

    def backward(g):
        if x.requires_grad:
            x.grad += g @ w.data.T
        if w.requires_grad:
            w.grad += x.data.T @ g
        if b.requires_grad:
            b.grad += g.sum(axis=0)

    out._backward = backward if out.requires_grad else None
    return out


_CONV_OFFSETS = [(dy, dx) for dy in range(3) for dx in range(3)]


def conv3x3(x, filters, bias):
    """Same-padded 3x3 convolution, x (B, H, W, Cin) -> (B, H, W, Cout).

    The product runs as one GEMM per image so results for an image do not
    depend on which other images share the batch.
    """
    x, filters, bias = as_tensor(x), as_tensor(filters), as_tensor(bias)
    batch, h, w, cin = x.data.shape
    if h < 3 or w < 3:
        raise ConfigurationError("conv3x3 requires spatial dims >= 3")
    if filters.data.shape[:3] != (3, 3, cin):
        raise ConfigurationError(f"filter shape {filters.data.shape} mismatches input {x.data.shape}")
    cout = filters.data.shape[3]

    padded = np.pad(x.data, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((batch, h, w, 9, cin), dtype=x.data.dtype)
    for k, (dy, dx) in enumerate(_CONV_OFFSETS):
        cols[:, :, :, k, :] = padded[:, dy : dy + h, dx : dx + w, :]
    cols2 = cols.reshape(batch, h * w, 9 * cin)
    wmat = filters.data.reshape(9 * cin, cout)
    y = np.matmul(cols2, wmat).reshape(batch, h, w, cout) + bias.data
    out = Tensor(y, _parents=(x, filters, bias))

    def backward(g):
        g2 = g.reshape(batch, h * w, cout)
        if filters.requires_grad:
            filters.grad += np.einsum("bpk,bpc->kc", cols2, g2).reshape(3, 3, cin, cout)
        if bias.requires_grad:
            bias.grad += g.sum(axis=(0, 1, 2))
        if x.requires_grad:
            dcols = np.matmul(g2, wmat.T).reshape(batch, h, w, 9, cin)
            dpad = np.zeros_like(padded)
            for k, (dy, dx) in enumerate(_CONV_OFFSETS):
                dpad[:, dy : dy + h, dx : dx + w, :] += dcols[:, :, :, k, :]
            x.grad += dpad[:, 1 : 1 + h, 1 : 1 + w, :]

    out._backward = backward if out.requires_grad else None
    return out


def maxpool2x2(x):
    """2x2 max pooling; gradient routes to the first maximum in scan order."""
    x = as_tensor(x)
    batch, h, w, c = x.data.shape
    if h % 2 or w % 2:
        raise ConfigurationError(f"maxpool2x2 requires even spatial dims, got {h}x{w}")
    cands = np.stack(
        [
            x.data[:, 0::2, 0::2, :],
            x.data[:, 0::2, 1::2, :],
            x.data[:, 1::2, 0::2, :],
            x.data[:, 1::2, 1::2, :],
        ],
        axis=0,
    )
    winner = np.argmax(cands, axis=0)  # first max in scan order
    y = np.take_along_axis(cands, winner[None], axis=0)[0]
    out = Tensor(y, _parents=(x,))

    def backward(g):
        dx = np.zeros_like(x.data)
        views = (
            dx[:, 0::2, 0::2, :],
            dx[:, 0::2, 1::2, :],
            dx[:, 1::2, 0::2, :],
            dx[:, 1::2, 1::2, :],
        )
        for k, view in enumerate(views):
            view += np.where(winner == k, g, 0.0)
        x.grad += dx

    out._backward = backward if out.requires_grad else None
    return out


def setmax(x, axis=0):
    """Element-wise maximum over a set axis; the gradient goes to the
    first contributing element along that axis."""
    x = as_tensor(x)
    if x.data.shape[axis] < 1:
        raise ConfigurationError("setmax over an empty set")
    winner = np.argmax(x.data, axis=axis)
    y = np.take_along_axis(x.data, np.expand_dims(winner, axis), axis=axis).squeeze(axis)
    out = Tensor(y, _parents=(x,))

    def backward(g):
        dx = np.zeros_like(x.data)
        np.put_along_axis(dx, np.expand_dims(winner, axis), np.expand_dims(g, axis), axis=axis)
        x.grad += dx

    out._backward = backward if out.requires_grad else None
    return out


def moment_pool(x, axis=0):
    """Mean and population variance over the set axis, concatenated along
    the feature (last) axis: (..., N, D) -> (..., 2D).

    Built from primitive ops, so gradients are exact by composition; a
    single-element set yields an exactly zero variance half.
    """
    x = as_tensor(x)
    if x.data.shape[axis] < 1:
        raise ConfigurationError("moment_pool over an empty set")
    m = tmean(x, axis=axis, keepdims=True)
    var = tmean(power(add(x, mul(m, -1.0)), 2.0), axis=axis, keepdims=True)
    pooled = concat([m, var], axis=-1)
    shape = list(pooled.data.shape)
    del shape[axis]
    return reshape(pooled, tuple(shape))


def n_parameters(params):
    """Exact parameter count of a name->Tensor mapping."""
    return int(sum(t.data.size for t in params.values()))


def grad_check(f, inputs, h=1e-5, max_coords=None, seed=0):
    """Compare analytic gradients of scalar f(*inputs) with central finite
    differences.

    Checks every coordinate, or a seeded random subset of max_coords per
    input for large parameter sets. Returns the maximum relative error
    with denominator max(|analytic|, |numeric|, 1e-8).
    """
    out = f(*inputs)
    out.backward()
    analytic = [np.array(t.grad) for t in inputs]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, g in zip(inputs, analytic):
        n = t.data.size
        if max_coords is None or n <= max_coords:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=max_coords, replace=False)
        for i in coords:
            original = t.data.flat[i]
            t.data.flat[i] = original + h
            f_plus = f(*inputs).item()
            t.data.flat[i] = original - h
            f_minus = f(*inputs).item()
            t.data.flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = g.flat[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst
