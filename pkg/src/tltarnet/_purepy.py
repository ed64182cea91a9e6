"""Pure-numpy kernels for the dense-layer hot path.

Used when the compiled extension (tltarnet._core) is unavailable or when
TLTARNET_BACKEND=pure is set.  Same contracts as the compiled module.
"""

import numpy as np

BACKEND_NAME = "pure"


def forward_stack(X, weights, biases, n_relu):
    """Run X through a stack of dense layers.

    ReLU is applied after layers 0..n_relu-1; remaining layers are linear.
    Returns the list of activations, acts[0] = X, acts[i+1] = output of layer i.
    """
    acts = [X]
    h = X
    for i in range(len(weights)):
        h = h @ weights[i] + biases[i]
        if i < n_relu:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def backward_stack(acts, weights, n_relu, d_out):
    """Backprop d_out (grad w.r.t. the stack output) through the stack.

    acts must come from a matching forward_stack call.  Returns
    (d_input, grads_w, grads_b) with grads in layer order.  ReLU gradient
    at exactly 0 is 0 (masked on the post-activation output).
    """
    L = len(weights)
    grads_w = [None] * L
    grads_b = [None] * L
    d = d_out
    for i in range(L - 1, -1, -1):
        if i < n_relu:
            d = np.where(acts[i + 1] > 0.0, d, 0.0)
        grads_w[i] = acts[i].T @ d
        grads_b[i] = d.sum(axis=0)
        d = d @ weights[i].T
    return d, grads_w, grads_b


def adam_update(param, grad, m, v, t, lr, beta1, beta2, eps):
    """One Adam step on a single parameter array, in place."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    param -= lr * mhat / (np.sqrt(vhat) + eps)
