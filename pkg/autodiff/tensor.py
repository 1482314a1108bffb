"""
Dense double-precision tensors with tape-based reverse-mode differentiation.

A Tensor wraps a float64 numpy array. Operations only build a graph while
a Tape is active (``with Tape() as tape:``); outside a tape every op is a
plain numpy computation, which is how inference runs. A tape records the
ops in execution order, so walking the records backwards visits every
node after all of its consumers.
"""

import threading

import numpy as np

from depthlab.exceptions import DimensionError, TapeError

_state = threading.local()


def _tape_stack():
    stack = getattr(_state, 'tapes', None)
    if stack is None:
        stack = _state.tapes = []
    return stack


def current_tape():
    """Return the innermost active tape of this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """
    n-dimensional float64 array with an optional gradient slot.

    Leaf tensors created by the user accumulate gradients in `grad`
    after Tape.backward(); intermediate results never do.
    """

    def __init__(self, data, requires_grad=False, name=''):
        self.data = np.array(data, dtype=np.float64, order='C')
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.is_leaf = True
        self.name = name

    def __repr__(self):
        flag = ', requires_grad=True' if self.requires_grad else ''
        return f'Tensor(shape={self.shape}{flag})'

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise DimensionError(f'item() needs a single element, got shape {self.shape}')
        return float(self.data.reshape(-1)[0])

    def detach(self):
        """Return a constant copy that is cut off from the graph."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # Operator sugar; the implementations live in autodiff.ops.

    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __getitem__(self, key):
        from . import ops
        return ops.index(self, key)

    def sum(self, axis=None):
        from . import ops
        return ops.sum(self, axis)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


class Parameter(Tensor):
    """
    Trainable leaf tensor with its RMSProp running mean of squared gradients.
    """

    def __init__(self, data, name=''):
        super().__init__(data, requires_grad=True, name=name)
        self.accumulator = np.zeros_like(self.data)


def as_tensor(value):
    """Return `value` unchanged if it is a Tensor, else a constant Tensor."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def make_result(data, inputs, backward):
    """
    Wrap the output of an op and record it on the active tape.

    `backward(grad)` must return one gradient (or None) per input, each
    shaped like that input.
    """
    out = Tensor(data)
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.is_leaf = False
        tape.record(out, tuple(inputs), backward)
    return out


class Tape:
    """
    Ordered record of the differentiable ops of one forward pass.

    A tape is single-use: backward() consumes it and releases the graph.
    Tapes are confined to the thread that entered them.
    """

    def __init__(self):
        self.records = []
        self.consumed = False

    def __enter__(self):
        if self.consumed:
            raise TapeError('tape has already been used for a backward pass')
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        elif self in stack:
            stack.remove(self)
        return False

    def record(self, output, inputs, backward):
        self.records.append((output, inputs, backward))

    def __len__(self):
        return len(self.records)

    def backward(self, loss, grad=None):
        """
        Propagate d(loss)/d(leaf) into the `grad` slot of every leaf.

        `grad` seeds the output gradient; it defaults to ones, which is
        the usual choice for a scalar loss.
        """
        if self.consumed:
            raise TapeError('tape has already been used for a backward pass')
        self.consumed = True
        if not loss.requires_grad:
            raise TapeError('loss does not depend on any tensor that requires grad')

        seed = np.ones_like(loss.data) if grad is None else np.asarray(grad, dtype=np.float64)
        if seed.shape != loss.shape:
            raise TapeError(f'seed gradient shape {seed.shape} != loss shape {loss.shape}')
        if loss.is_leaf:
            _accumulate(loss, seed)
            self.records = []
            return

        pending = {id(loss): seed}
        for output, inputs, backward in reversed(self.records):
            g = pending.pop(id(output), None)
            if g is None:
                continue
            for tensor, g_in in zip(inputs, backward(g)):
                if g_in is None or not tensor.requires_grad:
                    continue
                if tensor.is_leaf:
                    _accumulate(tensor, g_in)
                else:
                    key = id(tensor)
                    pending[key] = g_in if key not in pending else pending[key] + g_in
        self.records = []


def _accumulate(tensor, g):
    g = np.asarray(g, dtype=np.float64).reshape(tensor.shape)
    tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g
