"""Differentiable operations over :class:`Tensor`.

Each op computes its forward value with numpy and registers a closure that
maps the output gradient to one gradient per input (``None`` where an input
does not need one).
"""

from __future__ import annotations

import numpy as np

from .tensor import ContractError, DimensionError, Tensor, unbroadcast


def _t(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype) if dtype is not None else x)


# ---------------------------------------------------------------- elementwise
def add(a, b) -> Tensor:
    a, b = _t(a, b if isinstance(b, Tensor) else None), _t(b, a if isinstance(a, Tensor) else None)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return Tensor.from_op(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _t(a, b if isinstance(b, Tensor) else None), _t(b, a if isinstance(a, Tensor) else None)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return Tensor.from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _t(a, b if isinstance(b, Tensor) else None), _t(b, a if isinstance(a, Tensor) else None)

    def backward(g):
        ga = unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor.from_op(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = _t(a, b if isinstance(b, Tensor) else None), _t(b, a if isinstance(a, Tensor) else None)
    out = a.data / b.data

    def backward(g):
        ga = unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor.from_op(out, (a, b), backward, "div")


def power(a: Tensor, exponent: float) -> Tensor:
    def backward(g):
        return (g * exponent * a.data ** (exponent - 1),)

    return Tensor.from_op(a.data ** exponent, (a,), backward, "pow")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return Tensor.from_op(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return Tensor.from_op(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * (1 - out * out),), "tanh")


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * out * (1 - out),), "sigmoid")


ACTIVATIONS = {"relu": relu, "tanh": tanh, "sigmoid": sigmoid}


def activation(a: Tensor, kind: str) -> Tensor:
    try:
        return ACTIVATIONS[kind](a)
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(ACTIVATIONS)}") from None


# ----------------------------------------------------------------- reductions
def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor.from_op(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / float(count))


# ------------------------------------------------------------- data movement
def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {a.shape} ({a.size} elements) into {shape}") from None
    return Tensor.from_op(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    inverse = None if axes is None else np.argsort(axes)
    return Tensor.from_op(np.transpose(a.data, axes), (a,),
                          lambda g: (np.transpose(g, inverse),), "transpose")


def _is_basic(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (slice, int, type(None), type(Ellipsis))) for p in parts)


def index(a: Tensor, idx) -> Tensor:
    basic = _is_basic(idx)

    def backward(g):
        out = np.zeros_like(a.data)
        if basic:
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return Tensor.from_op(a.data[idx], (a,), backward, "index")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_t(x) for x in tensors]
    if not tensors:
        raise DimensionError("concat of an empty list")
    ref = tensors[0].shape
    ax = axis % len(ref)
    for x in tensors[1:]:
        if x.ndim != len(ref) or any(s != r for i, (s, r) in enumerate(zip(x.shape, ref)) if i != ax):
            raise DimensionError(f"concat shapes disagree off axis {axis}: {ref} vs {x.shape}")
    bounds = np.cumsum([x.shape[ax] for x in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return Tensor.from_op(np.concatenate([x.data for x in tensors], axis=ax),
                          tuple(tensors), backward, "concat")


def split(a: Tensor, sections, axis: int = 0) -> list:
    """Split into equal ``sections`` (int) or at explicit sizes (list)."""
    n = a.shape[axis]
    if isinstance(sections, int):
        if n % sections:
            raise DimensionError(f"axis of length {n} does not split into {sections} equal parts")
        sizes = [n // sections] * sections
    else:
        sizes = list(sections)
        if np.sum(sizes) != n:
            raise DimensionError(f"split sizes {sizes} do not sum to axis length {n}")
    out, start = [], 0
    for s in sizes:
        sl = [slice(None)] * a.ndim
        sl[axis] = slice(start, start + s)
        out.append(index(a, tuple(sl)))
        start += s
    return out


# ------------------------------------------------------------- linear algebra
def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _t(a), _t(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return Tensor.from_op(a.data @ b.data, (a, b), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as [in, out]."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


# --------------------------------------------------------------- convolution
def _conv_out(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> tuple:
    """Padded NCHW -> channels-last columns [N*Ho*Wo, kh*kw*C], Ho, Wo."""
    n, c, hp, wp = xp.shape
    ho, wo = (hp - kh) // stride + 1, (wp - kw) // stride + 1
    xh = xp.transpose(0, 2, 3, 1)
    # one strided slice per kernel offset; far faster than copying a sliding-window view
    cols = np.empty((n, ho, wo, kh, kw, c), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j] = xh[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]
    return cols.reshape(n * ho * wo, kh * kw * c), ho, wo


def _col2im(cols: np.ndarray, padded_shape: tuple, kh: int, kw: int, stride: int,
            ho: int, wo: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add columns into a padded NCHW image."""
    n, c, hp, wp = padded_shape
    cols = cols.reshape(n, ho, wo, kh, kw, c)
    out = np.zeros((n, hp, wp, c), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, :, i, j]
    return out.transpose(0, 3, 1, 2)


def _kernel_matrix(w: np.ndarray) -> np.ndarray:
    """[F,C,kh,kw] -> [F, kh*kw*C] matching the column layout."""
    return np.ascontiguousarray(w.transpose(0, 2, 3, 1)).reshape(w.shape[0], -1)


def _kernel_from_matrix(m: np.ndarray, shape: tuple) -> np.ndarray:
    f, c, kh, kw = shape
    return np.ascontiguousarray(m.reshape(f, kh, kw, c).transpose(0, 3, 1, 2))


def _channels_last(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a.transpose(0, 2, 3, 1)).reshape(-1, a.shape[1])


def _check_conv_params(stride: int, padding: int) -> None:
    if int(stride) != stride or stride <= 0:
        raise ValueError(f"stride must be a positive integer, got {stride}")
    if int(padding) != padding or padding < 0:
        raise ValueError(f"padding must be a nonnegative integer, got {padding}")


def _crop(a: np.ndarray, p: int) -> np.ndarray:
    return a if p == 0 else a[:, :, p:-p, p:-p]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of [N,C,H,W] with [F,C,kh,kw] (no kernel flip)."""
    _check_conv_params(stride, padding)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise DimensionError(f"conv2d shape mismatch: input {x.shape}, weight {weight.shape}")
    f, c, kh, kw = weight.shape
    n, _, h, w = x.shape
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise DimensionError(f"kernel {kh}x{kw} larger than padded input {h}x{w} (pad {padding})")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols, ho, wo = _im2col(xp, kh, kw, stride)
    wmat = _kernel_matrix(weight.data)
    out = (cols @ wmat.T).reshape(n, ho, wo, f).transpose(0, 3, 1, 2)

    def backward(g):
        gmat = _channels_last(g)
        gx = gw = None
        if weight.requires_grad:
            gw = _kernel_from_matrix(gmat.T @ cols, weight.shape)
        if x.requires_grad:
            gx = np.ascontiguousarray(_crop(_col2im(gmat @ wmat, xp.shape, kh, kw, stride, ho, wo), padding))
        return gx, gw

    res = Tensor.from_op(np.ascontiguousarray(out), (x, weight), backward, "conv2d")
    return res if bias is None else add(res, reshape(bias, (1, f, 1, 1)))


def conv2d_transpose(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                     stride: int = 1, padding: int = 0, output_padding: int = 0) -> Tensor:
    """Adjoint of :func:`conv2d` with respect to its input.

    ``weight`` has the same [F,C,kh,kw] layout as for :func:`conv2d`, so the
    op maps F channels to C channels. Output size is
    ``(H-1)*stride - 2*padding + kh + output_padding``.
    """
    _check_conv_params(stride, padding)
    if not 0 <= output_padding < stride:
        raise ValueError(f"output_padding must be in [0, stride), got {output_padding}")
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[0]:
        raise DimensionError(f"conv2d_transpose shape mismatch: input {x.shape}, weight {weight.shape}")
    f, c, kh, kw = weight.shape
    n, _, h, w = x.shape
    ho = (h - 1) * stride - 2 * padding + kh + output_padding
    wo = (w - 1) * stride - 2 * padding + kw + output_padding
    if ho <= 0 or wo <= 0:
        raise DimensionError(f"conv2d_transpose output would be empty for input {x.shape}")
    padded = (n, c, ho + 2 * padding, wo + 2 * padding)
    wmat = _kernel_matrix(weight.data)
    xmat = _channels_last(x.data)
    out = _crop(_col2im(xmat @ wmat, padded, kh, kw, stride, h, w), padding)

    def backward(g):
        gp = np.pad(g, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else g
        gcols, _, _ = _im2col(gp, kh, kw, stride)
        gx = gw = None
        if x.requires_grad:
            gx = np.ascontiguousarray((gcols @ wmat.T).reshape(n, h, w, f).transpose(0, 3, 1, 2))
        if weight.requires_grad:
            gw = _kernel_from_matrix(xmat.T @ gcols, weight.shape)
        return gx, gw

    res = Tensor.from_op(np.ascontiguousarray(out), (x, weight), backward, "conv2d_transpose")
    return res if bias is None else add(res, reshape(bias, (1, c, 1, 1)))


# --------------------------------------------------------------- batch norm
def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray | None,
               running_var: np.ndarray | None, training: bool, momentum: float = 0.1,
               eps: float = 1e-5) -> Tensor:
    """Per-channel normalisation of [N,C] or [N,C,H,W] input.

    In training mode batch statistics are used and the running buffers are
    updated in place (unbiased variance, exponential ``momentum``).
    """
    if x.ndim not in (2, 4):
        raise DimensionError(f"batch_norm expects 2-D or 4-D input, got {x.shape}")
    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    bshape = (1, -1) if x.ndim == 2 else (1, -1, 1, 1)
    c = x.shape[1]
    g = gamma.data.reshape(bshape)
    b = beta.data.reshape(bshape)

    if training:
        if x.shape[0] < 2:
            raise ContractError("batch_norm in training mode needs a batch of at least 2")
        m = x.data.size // c
        mu = x.data.mean(axis=axes, keepdims=True)
        var = x.data.var(axis=axes, keepdims=True)
        if running_mean is not None:
            running_mean *= 1 - momentum
            running_mean += momentum * mu.reshape(c)
            running_var *= 1 - momentum
            running_var += momentum * var.reshape(c) * (m / max(m - 1, 1))
    else:
        m = None
        mu = running_mean.reshape(bshape)
        var = running_var.reshape(bshape)

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = xhat * g + b

    def backward(grad):
        ggamma = (grad * xhat).sum(axis=axes) if gamma.requires_grad else None
        gbeta = grad.sum(axis=axes) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            dxhat = grad * g
            if training:
                gx = (inv_std / m) * (m * dxhat - dxhat.sum(axis=axes, keepdims=True)
                                      - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True))
            else:
                gx = dxhat * inv_std
        return gx, ggamma, gbeta

    return Tensor.from_op(out.astype(x.dtype, copy=False), (x, gamma, beta), backward, "batch_norm")


# -------------------------------------------------------------------- losses
def sum_squared_error(a: Tensor, b: Tensor) -> Tensor:
    """Squared L2 distance per sample, shape [N]."""
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    axes = tuple(range(1, a.ndim))

    def backward(g):
        gg = 2 * diff * g.reshape((-1,) + (1,) * (a.ndim - 1))
        return (gg if a.requires_grad else None), (-gg if b.requires_grad else None)

    return Tensor.from_op((diff * diff).sum(axis=axes), (a, b), backward, "sse")


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Batch mean of per-sample squared L2 norms: ``sum ||a_i - b_i||^2 / N``.

    No per-element averaging happens here; see :func:`mse_per_element`.
    """
    a, b = _t(a), _t(b)
    return mean(sum_squared_error(a, b))


def mse_per_element(a: Tensor, b: Tensor) -> Tensor:
    """Mean over every element (the per-pixel convention)."""
    a, b = _t(a), _t(b)
    per_sample = a.size // a.shape[0]
    return mse(a, b) * (1.0 / per_sample)
