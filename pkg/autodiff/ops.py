"""
Elementwise, reduction and shape operations.

Binary ops take operands of identical shape, or one operand that is a
scalar (a Python number or a 0-d tensor); there is no implicit
broadcasting. Use broadcast_to() to expand an operand explicitly.
"""

import numpy as np

from depthlab.exceptions import DimensionError

from .tensor import as_tensor, make_result


def _binary_operands(a, b, op):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise DimensionError(f'{op}: shapes {a.shape} and {b.shape} differ')
    return a, b


def _reduce_to(g, shape):
    """Sum `g` down to `shape` (undoes a numpy broadcast)."""
    if g.shape == tuple(shape):
        return g
    lead = g.ndim - len(shape)
    if lead > 0:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b):
    a, b = _binary_operands(a, b, 'add')

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return make_result(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = _binary_operands(a, b, 'sub')

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return make_result(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = _binary_operands(a, b, 'mul')

    def backward(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return make_result(a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = _binary_operands(a, b, 'div')
    out = a.data / b.data

    def backward(g):
        return _reduce_to(g / b.data, a.shape), _reduce_to(-g * out / b.data, b.shape)

    return make_result(out, (a, b), backward)


def neg(a):
    a = as_tensor(a)
    return make_result(-a.data, (a,), lambda g: (-g,))


def relu(a):
    a = as_tensor(a)
    active = a.data > 0

    def backward(g):
        return (g * active,)

    return make_result(np.where(active, a.data, 0.0), (a,), backward)


def clip(a, low, high):
    """Clamp to [low, high]; the gradient passes only where no clamping happened."""
    a = as_tensor(a)
    inside = (a.data >= low) & (a.data <= high)

    def backward(g):
        return (g * inside,)

    return make_result(np.clip(a.data, low, high), (a,), backward)


def where(mask, a, b):
    """Elementwise select: a where `mask` is true, else b. Gradients follow the selection."""
    a, b = _binary_operands(a, b, 'where')
    shape = a.shape if a.ndim else b.shape
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), shape)

    def backward(g):
        return _reduce_to(g * mask, a.shape), _reduce_to(g * ~mask, b.shape)

    return make_result(np.where(mask, a.data, b.data), (a, b), backward)


def sum(a, axis=None):  # noqa: A001
    a = as_tensor(a)
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return make_result(out, (a,), backward)


def reshape(a, shape):
    a = as_tensor(a)
    out = a.data.reshape(shape)
    return make_result(out, (a,), lambda g: (g.reshape(a.shape),))


def broadcast_to(a, shape):
    """Expand `a` to `shape` following numpy broadcasting rules."""
    a = as_tensor(a)
    try:
        out = np.broadcast_to(a.data, shape).copy()
    except ValueError as exc:
        raise DimensionError(f'cannot broadcast {a.shape} to {tuple(shape)}') from exc
    return make_result(out, (a,), lambda g: (_reduce_to(g, a.shape),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f'concat: {exc}') from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_result(out, tensors, backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f'stack: shapes differ: {sorted(shapes)}')
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return make_result(out, tensors, backward)


def index(a, key):
    """Basic indexing and slicing (``a[key]``)."""
    a = as_tensor(a)
    out = np.array(a.data[key])

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return (full,)

    return make_result(out, (a,), backward)


def gather(a, flat_index):
    """Pick elements of `a` by flat (raveled) index; output has the index's shape."""
    a = as_tensor(a)
    flat_index = np.asarray(flat_index, dtype=np.intp)
    out = a.data.reshape(-1)[flat_index]

    def backward(g):
        full = np.zeros(a.size)
        np.add.at(full, flat_index.reshape(-1), g.reshape(-1))
        return (full.reshape(a.shape),)

    return make_result(out, (a,), backward)


def scatter(a, flat_index, shape):
    """
    Place the elements of `a` at distinct flat positions of a zero tensor.

    Inverse bookkeeping of gather(); `flat_index` must not repeat.
    """
    a = as_tensor(a)
    flat_index = np.asarray(flat_index, dtype=np.intp).reshape(-1)
    if flat_index.size != a.size:
        raise DimensionError(f'scatter: {a.size} values for {flat_index.size} positions')
    out = np.zeros(int(np.prod(shape)))
    out[flat_index] = a.data.reshape(-1)

    def backward(g):
        return (g.reshape(-1)[flat_index].reshape(a.shape),)

    return make_result(out.reshape(shape), (a,), backward)
