"""Adam optimizer over a ParameterStore, honoring per-layer freeze flags."""

from dataclasses import dataclass, field

import numpy as np

from .backend import adam_update
from .errors import NumericalError


@dataclass
class OptimizerState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)  # (mW, mb) per layer
    v: list = field(default_factory=list)


def init_optimizer(store, learning_rate):
    if learning_rate <= 0:
        raise ValueError(f"learning_rate must be positive, got {learning_rate}")
    opt = OptimizerState(learning_rate=float(learning_rate))
    for layer in store.layers:
        opt.m.append((np.zeros_like(layer.W), np.zeros_like(layer.b)))
        opt.v.append((np.zeros_like(layer.W), np.zeros_like(layer.b)))
    return opt


def adam_step(store, grads, opt):
    """Apply one Adam update to every non-frozen layer, in place.

    Non-finite gradients abort with a NumericalError naming the layer.
    Returns (store, opt).
    """
    opt.step += 1
    for i, (layer, (gW, gb)) in enumerate(zip(store.layers, grads)):
        if layer.frozen:
            continue
        if not (np.all(np.isfinite(gW)) and np.all(np.isfinite(gb))):
            raise NumericalError(f"non-finite gradient at layer {i} (step {opt.step})")
        mW, mb = opt.m[i]
        vW, vb = opt.v[i]
        adam_update(layer.W, gW, mW, vW, opt.step, opt.learning_rate,
                    opt.beta1, opt.beta2, opt.eps)
        adam_update(layer.b, gb, mb, vb, opt.step, opt.learning_rate,
                    opt.beta1, opt.beta2, opt.eps)
    return store, opt
