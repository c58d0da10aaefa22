"""Optimizer steps: RMSProp and SGD with momentum.

Both operate in place on a name -> Tensor parameter mapping and keep one
accumulator per parameter. Steps are deterministic functions of (state,
gradients, hyperparameters); a non-finite gradient aborts the step.
"""

import numpy as np

from .autodiff import Tensor
from .errors import NonFiniteGradientError


def _check_finite(name, grad, step_index):
    if not np.all(np.isfinite(grad)):
        bad = int(np.sum(~np.isfinite(grad)))
        raise NonFiniteGradientError(
            f"non-finite gradient for {name!r} at step {step_index}: {bad} bad entries"
        )


class RMSProp:
    def __init__(self, params, lr=1e-4, decay=0.9, eps=1e-8):
        self.params = params
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.state = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.step_index = 0

    def step(self):
        for name, tensor in self.params.items():
            g = tensor.grad
            _check_finite(name, g, self.step_index)
            s = self.state[name]
            s *= self.decay
            s += (1.0 - self.decay) * g * g
            tensor.data -= (self.lr * g / (np.sqrt(s) + self.eps)).astype(tensor.data.dtype)
        self.step_index += 1


class SGDMomentum:
    def __init__(self, params, lr=0.01, momentum=0.9):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.state = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.step_index = 0

    def step(self):
        for name, tensor in self.params.items():
            g = tensor.grad
            _check_finite(name, g, self.step_index)
            v = self.state[name]
            v *= self.momentum
            v -= self.lr * g
            tensor.data += v.astype(tensor.data.dtype)
        self.step_index += 1


def make_optimizer(kind, params, **kwargs):
    if kind == "rmsprop":
        return RMSProp(params, **kwargs)
    if kind == "sgd":
        return SGDMomentum(params, **kwargs)
    raise ValueError(f"unknown optimizer {kind!r}")


def zero_grads(params):
    for tensor in params.values():
        tensor.grad = None
