"""
Differentiable primitives.

Every primitive takes :class:`Tensor` operands, checks the shape rule, computes
the forward value with numpy and, when a tape is active, records the
vector-Jacobian product used by :meth:`Tape.backward`.

Subgradient conventions: ``relu``, ``abs``, ``maximum`` and ``minimum`` have a
zero adjoint at their kink; ``sqrt`` has a zero adjoint at 0.
"""
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exception import DomainException, ShapeException
from .tensor import Tensor, apply

Axis = Optional[int | Tuple[int, ...]]


def _same_shape(kind: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeException(kind, a.shape, b.shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape('add', a, b)
    return apply('add', (a, b), a.data + b.data, lambda g: (g, g))


def subtract(a: Tensor, b: Tensor) -> Tensor:
    _same_shape('subtract', a, b)
    return apply('subtract', (a, b), a.data - b.data, lambda g: (g, -g))


def multiply(a: Tensor, b: Tensor) -> Tensor:
    _same_shape('multiply', a, b)
    x, y = a.data, b.data
    return apply('multiply', (a, b), x * y, lambda g: (g * y, g * x))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return apply('scale', (a,), a.data * c, lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    return apply('add_scalar', (a,), a.data + float(c), lambda g: (g,))


def neg(a: Tensor) -> Tensor:
    return apply('neg', (a,), -a.data, lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeException('matmul', a.shape, b.shape)
    x, y = a.data, b.data
    return apply('matmul', (a, b), x @ y, lambda g: (g @ y.T, x.T @ g))


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeException('transpose', a.shape)
    return apply('transpose', (a,), a.data.T.copy(), lambda g: (g.T,))


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """
    Stride-1 cross-correlation with zero padding that keeps the spatial size.

    :param x: input, shape (N, C, H, W)
    :param w: kernels, shape (O, C, k, k) with odd k
    :param b: optional bias, shape (O,)
    :return: output, shape (N, O, H, W)
    """
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1] \
            or w.shape[2] != w.shape[3] or w.shape[2] % 2 == 0:
        raise ShapeException('conv2d', x.shape, w.shape)
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeException('conv2d', w.shape, b.shape)
    k = w.shape[2]
    p = k // 2
    xd, wd = x.data, w.data
    xp = np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p)))
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))
    out = np.tensordot(cols, wd, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if b is not None:
        out = out + b.data[None, :, None, None]

    def vjp(g: np.ndarray):
        gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))
        gp = np.pad(g, ((0, 0), (0, 0), (p, p), (p, p)))
        gcols = sliding_window_view(gp, (k, k), axis=(2, 3))
        gx = np.tensordot(gcols, wd[:, :, ::-1, ::-1], axes=([1, 4, 5], [0, 2, 3])).transpose(0, 3, 1, 2)
        grads = (gx, gw)
        return grads + (g.sum(axis=(0, 2, 3)),) if b is not None else grads

    inputs = (x, w) if b is None else (x, w, b)
    return apply('conv2d', inputs, np.ascontiguousarray(out), vjp)


def mean_pool2x2(x: Tensor) -> Tensor:
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeException('mean_pool2x2', x.shape)
    n, c, h, w = x.shape
    out = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def vjp(g: np.ndarray):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) / 4.0,)

    return apply('mean_pool2x2', (x,), out, vjp)


def upsample2x(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ShapeException('upsample2x', x.shape)
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def vjp(g: np.ndarray):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return apply('upsample2x', (x,), out, vjp)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return apply('relu', (x,), np.where(mask, x.data, 0.0), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    # tanh form stays finite for large |x|
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return apply('sigmoid', (x,), s, lambda g: (g * s * (1.0 - s),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return apply('exp', (x,), out, lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise DomainException('log', f'non-positive input (min {x.data.min()!r})')
    xd = x.data
    return apply('log', (x,), np.log(xd), lambda g: (g / xd,))


def square(x: Tensor) -> Tensor:
    xd = x.data
    return apply('square', (x,), xd * xd, lambda g: (2.0 * xd * g,))


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data < 0):
        raise DomainException('sqrt', f'negative input (min {x.data.min()!r})')
    out = np.sqrt(x.data)

    def vjp(g: np.ndarray):
        positive = out > 0
        return (np.where(positive, g / (2.0 * np.where(positive, out, 1.0)), 0.0),)

    return apply('sqrt', (x,), out, vjp)


def abs(x: Tensor) -> Tensor:  # noqa: A001
    sign = np.sign(x.data)
    return apply('abs', (x,), np.abs(x.data), lambda g: (g * sign,))


def maximum(x: Tensor, c: float) -> Tensor:
    """ max(x, c) with scalar c; adjoint is 1 where x > c, else 0 (including equality). """
    c = float(c)
    active = x.data > c
    return apply('maximum', (x,), np.where(active, x.data, c), lambda g: (g * active,))


def minimum(x: Tensor, c: float) -> Tensor:
    """ min(x, c) with scalar c; adjoint is 1 where x < c, else 0 (including equality). """
    c = float(c)
    active = x.data < c
    return apply('minimum', (x,), np.where(active, x.data, c), lambda g: (g * active,))


def _reduced_count(shape: Tuple[int, ...], axis: Axis) -> int:
    if axis is None:
        return int(np.prod(shape)) if shape else 1
    axes = (axis,) if isinstance(axis, int) else axis
    return int(np.prod([shape[a] for a in axes]))


def _expand_back(g: np.ndarray, shape: Tuple[int, ...], axis: Axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else axis
        g = np.expand_dims(g, tuple(a % len(shape) for a in axes))
    return np.broadcast_to(g, shape).copy()


def sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = x.shape
    out = np.sum(x.data, axis=axis, keepdims=keepdims)
    return apply('sum', (x,), np.asarray(out), lambda g: (_expand_back(g, shape, axis, keepdims),))


def mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    shape = x.shape
    n = _reduced_count(shape, axis)
    out = np.mean(x.data, axis=axis, keepdims=keepdims)
    return apply('mean', (x,), np.asarray(out), lambda g: (_expand_back(g, shape, axis, keepdims) / n,))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeException('reshape', x.shape, shape) from None
    original = x.shape
    return apply('reshape', (x,), out, lambda g: (g.reshape(original),))


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    """
    Explicit broadcast. The adjoint sums over the leading axes that were
    added and over the axes where the operand had extent 1.
    """
    shape = tuple(shape)
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise ShapeException('broadcast_to', x.shape, shape) from None
    original = x.shape

    def vjp(g: np.ndarray):
        lead = len(shape) - len(original)
        g = g.sum(axis=tuple(range(lead))) if lead else g
        axes = tuple(i for i, n in enumerate(original) if n == 1 and shape[lead + i] != 1)
        return (g.sum(axis=axes, keepdims=True) if axes else g,)

    return apply('broadcast_to', (x,), out, vjp)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeException('concat')
    first = tensors[0].shape
    ax = axis % len(first)
    for t in tensors[1:]:
        if len(t.shape) != len(first) or any(a != b for i, (a, b) in enumerate(zip(t.shape, first)) if i != ax):
            raise ShapeException('concat', first, t.shape)
    out = np.concatenate([t.data for t in tensors], axis=ax)
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]
    return apply('concat', tuple(tensors), out, lambda g: tuple(np.split(g, bounds, axis=ax)))


def l2_normalize(x: Tensor) -> Tensor:
    """ Divides each vector along the last axis by its Euclidean norm. """
    norms = np.sqrt(np.sum(x.data * x.data, axis=-1, keepdims=True))
    if np.any(norms == 0):
        raise DomainException('l2_normalize', 'zero-norm vector')
    y = x.data / norms

    def vjp(g: np.ndarray):
        return ((g - y * np.sum(g * y, axis=-1, keepdims=True)) / norms,)

    return apply('l2_normalize', (x,), y, vjp)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """ Affine map x @ w + b for a batch x of shape (N, F). """
    out = matmul(x, w)
    return add(out, broadcast_to(b, out.shape))


PRIMITIVES: Dict[str, Callable[..., Tensor]] = {
    'add': add,
    'subtract': subtract,
    'multiply': multiply,
    'scale': scale,
    'add_scalar': add_scalar,
    'neg': neg,
    'matmul': matmul,
    'transpose': transpose,
    'conv2d': conv2d,
    'mean_pool2x2': mean_pool2x2,
    'upsample2x': upsample2x,
    'relu': relu,
    'sigmoid': sigmoid,
    'exp': exp,
    'log': log,
    'square': square,
    'sqrt': sqrt,
    'abs': abs,
    'maximum': maximum,
    'minimum': minimum,
    'sum': sum,
    'mean': mean,
    'reshape': reshape,
    'broadcast_to': broadcast_to,
    'concat': concat,
    'l2_normalize': l2_normalize,
}


def forward_op(kind: str, *inputs, **kwargs) -> Tensor:
    """
    Evaluates the primitive named `kind`, recording it on the active tape.

    :param kind: primitive name, one of :data:`PRIMITIVES`
    :return: output tensor
    """
    try:
        fn = PRIMITIVES[kind]
    except KeyError:
        raise DomainException('forward_op', f'unknown primitive {kind!r}') from None
    return fn(*inputs, **kwargs)
