"""
RMSProp updates and the step-decay learning-rate schedule.
"""

import numpy as np


def rmsprop_step(params, lr, decay_rate=0.9, eps=1e-8):
    """
    Apply one RMSProp update to every parameter that received a gradient.

        acc <- rho * acc + (1 - rho) * g**2
        theta <- theta - lr * g / (sqrt(acc) + eps)

    Gradients are cleared afterwards. Parameters without a gradient are
    left untouched, accumulator included.
    """
    for param in params:
        g = param.grad
        if g is None:
            continue
        param.accumulator *= decay_rate
        param.accumulator += (1.0 - decay_rate) * g * g
        param.data -= lr * g / (np.sqrt(param.accumulator) + eps)
        param.grad = None


def step_decay_lr(base_lr, decay, every, epoch):
    """Learning rate at `epoch` (0-based): base_lr * decay ** (epoch // every)."""
    return base_lr * decay ** (epoch // every)
