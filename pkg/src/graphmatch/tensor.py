"""Dense tensors backed by numpy with reverse-mode automatic differentiation.

Every differentiable operation records a closure on a tape; calling
``backward()`` on a scalar result walks the tape in reverse topological
order and accumulates gradients into ``.grad`` (summing when a tensor
feeds several consumers). Arrays are float32 by default; float64 is
supported throughout for high-precision gradient checking.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DegenerateBatchError, ShapeError

DEFAULT_DTYPE = np.float32

_grad_enabled = True


class no_grad:
    """Context manager that disables tape recording (eval-mode forward)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward_fn = None

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def has_bad_values(self) -> bool:
        """True if any entry is NaN or infinite (detectable error state)."""
        return not bool(np.isfinite(self.data).all())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- gradient bookkeeping -----------------------------------------------

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-mode accumulation from a scalar loss over the whole tape."""
        if self.data.size != 1:
            raise ContractError("backward() requires a scalar loss, got shape %r" % (self.data.shape,))
        if not self.requires_grad:
            raise ContractError("loss is not connected to any tensor that requires gradients")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            fn = node._backward_fn
            if fn is not None and node.grad is not None:
                fn(node.grad)

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other, self)))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self):
        return transpose(self)

    @property
    def T(self):
        return transpose(self)


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _from_op(data: np.ndarray, parents, backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward_fn = None
    return out


def _toposort(root: Tensor):
    order = []
    seen = set()
    stack = [(root, iter(root._parents))]
    seen.add(id(root))
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            if id(p) not in seen and p.requires_grad:
                seen.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcasted gradient back down to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise ops ---------------------------------------------------------


def add(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _as_tensor(b, a)
    data = a.data + b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _from_op(data, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    def bw(g):
        _accumulate(a, -g)

    return _from_op(-a.data, (a,), bw)


def mul(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _as_tensor(b, a)
    data = a.data * b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _from_op(data, (a, b), bw)


def div(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _as_tensor(b, a)
    data = a.data / b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _from_op(data, (a, b), bw)


def relu(a: Tensor) -> Tensor:
    # subgradient at 0 is 0: strict > in the mask
    mask = a.data > 0
    data = np.where(mask, a.data, 0).astype(a.data.dtype, copy=False)

    def bw(g):
        _accumulate(a, g * mask)

    return _from_op(data, (a,), bw)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def bw(g):
        _accumulate(a, g * data)

    return _from_op(data, (a,), bw)


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def bw(g):
        _accumulate(a, g / a.data)

    return _from_op(data, (a,), bw)


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)

    def bw(g):
        _accumulate(a, g * (0.5 / data))

    return _from_op(data, (a,), bw)


# -- reductions / reshaping ---------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)
    if np.isscalar(data):  # axis=None on 0-d
        data = np.asarray(data)

    def bw(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape))
        else:
            gk = g if keepdims else np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(gk, a.data.shape))

    return _from_op(data, (a,), bw)


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.data.shape[i] for i in axes]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a: Tensor, *shape) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    orig = a.data.shape
    data = a.data.reshape(shape)

    def bw(g):
        _accumulate(a, g.reshape(orig))

    return _from_op(data, (a,), bw)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("transpose expects a 2-D tensor, got shape %r" % (a.data.shape,))

    def bw(g):
        _accumulate(a, g.T)

    return _from_op(a.data.T, (a,), bw)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ContractError("concat of zero tensors")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(str(e)) from None
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, offsets, axis=axis)):
            _accumulate(t, piece)

    return _from_op(data, tuple(tensors), bw)


# -- gathers -------------------------------------------------------------------


def take_rows(a: Tensor, idx) -> Tensor:
    """Select rows along axis 0 (repeats allowed; gradients scatter-add)."""
    idx = np.asarray(idx, dtype=np.intp)
    data = a.data[idx]

    def bw(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        _accumulate(a, ga)

    return _from_op(data, (a,), bw)


def take_along_rows(a: Tensor, idx) -> Tensor:
    """out[i, j] = a[i, idx[i, j]] for a 2-D tensor and integer index matrix."""
    if a.data.ndim != 2:
        raise ShapeError("take_along_rows expects a 2-D tensor")
    idx = np.asarray(idx, dtype=np.intp)
    data = np.take_along_axis(a.data, idx, axis=1)
    rows = np.arange(idx.shape[0])[:, None]

    def bw(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, (rows, idx), g)
        _accumulate(a, ga)

    return _from_op(data, (a,), bw)


# -- linear algebra -------------------------------------------------------------


def matmul(a: Tensor, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _as_tensor(b, a)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul expects 2-D operands, got %r and %r" % (a.data.shape, b.data.shape))
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError("matmul inner dimensions disagree: %r vs %r" % (a.data.shape, b.data.shape))
    data = a.data @ b.data

    def bw(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _from_op(data, (a, b), bw)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        _accumulate(a, (g - inner) * data)

    return _from_op(data, (a,), bw)


# -- convolution -----------------------------------------------------------------


def _im2col(x: np.ndarray, k: int, stride: int, padding: int):
    b, c, h, w = x.shape
    h_out = (h + 2 * padding - k) // stride + 1
    w_out = (w + 2 * padding - k) // stride + 1
    if padding > 0:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((b, c, k, k, h_out, w_out), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = x[:, :, i : i + stride * h_out : stride, j : j + stride * w_out : stride]
    return cols.reshape(b, c * k * k, h_out * w_out), h_out, w_out


def _col2im(gcols: np.ndarray, x_shape, k: int, stride: int, padding: int):
    b, c, h, w = x_shape
    h_out = (h + 2 * padding - k) // stride + 1
    w_out = (w + 2 * padding - k) // stride + 1
    gcols = gcols.reshape(b, c, k, k, h_out, w_out)
    gx = np.zeros((b, c, h + 2 * padding, w + 2 * padding), dtype=gcols.dtype)
    for i in range(k):
        for j in range(k):
            gx[:, :, i : i + stride * h_out : stride, j : j + stride * w_out : stride] += gcols[:, :, i, j]
    if padding > 0:
        gx = gx[:, :, padding:-padding, padding:-padding]
    return gx


def conv2d(x: Tensor, kernels: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding, differentiable in both operands.

    ``x`` may be (C,H,W) or (B,C,H,W); kernels are (C_out,C_in,k,k) square.
    """
    squeeze = False
    if x.data.ndim == 3:
        x = reshape(x, (1,) + x.data.shape)
        squeeze = True
    if x.data.ndim != 4 or kernels.data.ndim != 4:
        raise ShapeError("conv2d expects (B,C,H,W) input and (O,C,k,k) kernels")
    b, c, h, w = x.data.shape
    c_out, c_in, kh, kw = kernels.data.shape
    if kh != kw:
        raise ShapeError("conv2d supports square kernels only, got %dx%d" % (kh, kw))
    if c_in != c:
        raise ShapeError("kernel input channels (%d) do not match input (%d)" % (c_in, c))
    k = kh
    if k > h + 2 * padding or k > w + 2 * padding:
        raise ShapeError("kernel %d exceeds padded input %dx%d" % (k, h + 2 * padding, w + 2 * padding))

    cols, h_out, w_out = _im2col(x.data, k, stride, padding)
    w2 = kernels.data.reshape(c_out, c_in * k * k)
    out = np.matmul(w2, cols).reshape(b, c_out, h_out, w_out)

    def bw(g):
        g2 = g.reshape(b, c_out, h_out * w_out)
        if kernels.requires_grad:
            gw = np.einsum("bop,bfp->of", g2, cols, optimize=True)
            _accumulate(kernels, gw.reshape(kernels.data.shape))
        if x.requires_grad:
            gcols = np.matmul(w2.T, g2)
            _accumulate(x, _col2im(gcols, x.data.shape, k, stride, padding))

    res = _from_op(out, (x, kernels), bw)
    if squeeze:
        res = reshape(res, res.data.shape[1:])
    return res


# -- batch normalization ------------------------------------------------------------


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
    *,
    momentum: float = 0.1,
    eps: float = 1e-5,
    training: bool = True,
) -> Tensor:
    """Per-channel batch normalization over a (B,C,H,W) tensor.

    Train mode normalizes with (biased) batch statistics and updates the
    running buffers in place; eval mode normalizes with the running buffers.
    """
    if x.data.ndim != 4:
        raise ShapeError("batch_norm expects a (B,C,H,W) tensor, got %r" % (x.data.shape,))
    axes = (0, 2, 3)
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError("batch_norm scale/shift must have shape (%d,)" % c)

    def per_channel(v):
        return v.reshape(1, c, 1, 1)

    if training:
        if x.data.shape[0] < 2:
            raise DegenerateBatchError("batch_norm in train mode requires batch size >= 2")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean.data[...] = (1.0 - momentum) * running_mean.data + momentum * mu
        running_var.data[...] = (1.0 - momentum) * running_var.data + momentum * var
    else:
        mu = running_mean.data
        var = running_var.data

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - per_channel(mu)) * per_channel(inv_std)
    out = per_channel(gamma.data) * xhat + per_channel(beta.data)

    def bw(g):
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).sum(axis=axes))
        if beta.requires_grad:
            _accumulate(beta, g.sum(axis=axes))
        if x.requires_grad:
            scale = per_channel(gamma.data * inv_std)
            if training:
                gmean = g.mean(axis=axes)
                gxhat_mean = (g * xhat).mean(axis=axes)
                gx = scale * (g - per_channel(gmean) - xhat * per_channel(gxhat_mean))
            else:
                gx = scale * g
            _accumulate(x, gx)

    return _from_op(out, (x, gamma, beta), bw)
