"""
Finite-difference verification of reverse-mode gradients.
"""

import numpy as np

from .tensor import Tape, Tensor


def _analytic(f, inputs):
    for t in inputs:
        t.grad = None
        t.requires_grad = True
    with Tape() as tape:
        out = f(*inputs)
    if out.size != 1:
        raise ValueError(f'gradient_check needs a scalar function, got shape {out.shape}')
    if out.requires_grad:
        tape.backward(out)
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]


def _evaluate(f, inputs):
    return float(f(*inputs).data.reshape(-1)[0])


def gradient_check(f, inputs, step=1e-4, floor=1e-3, max_entries=None, seed=0):
    """
    Compare the tape gradient of the scalar function `f(*inputs)` with
    central differences and return the largest relative error.

    Relative error per entry is |a - n| / max(|a|, |n|, floor), so entries
    whose true gradient is near zero are compared absolutely. With
    `max_entries`, a seeded random subset of each input's entries is
    checked instead of all of them.
    """
    inputs = [t if isinstance(t, Tensor) else Tensor(t) for t in inputs]
    analytic = _analytic(f, inputs)
    rng = np.random.default_rng(seed)

    worst = 0.0
    for tensor, grad in zip(inputs, analytic):
        entries = np.arange(tensor.data.size)
        if max_entries is not None and tensor.data.size > max_entries:
            entries = np.sort(rng.choice(tensor.data.size, size=max_entries, replace=False))
        for i in entries:
            # index the array itself; reshape of a non-contiguous array is a copy
            index = np.unravel_index(i, tensor.data.shape)
            original = tensor.data[index]
            tensor.data[index] = original + step
            plus = _evaluate(f, inputs)
            tensor.data[index] = original - step
            minus = _evaluate(f, inputs)
            tensor.data[index] = original
            numeric = (plus - minus) / (2 * step)
            a = grad[index]
            error = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, error)
    return worst
