import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fd_param_grad(loss_fn, arr, i, h=1e-4):
    """Central finite difference of loss_fn() w.r.t. flat entry i of arr."""
    flat = arr.reshape(-1)
    orig = flat[i]
    flat[i] = orig + h
    lp = loss_fn()
    flat[i] = orig - h
    lm = loss_fn()
    flat[i] = orig
    return (lp - lm) / (2.0 * h)


def assert_grads_match_fd(loss_fn, store, grads, rtol=1e-4, atol=1e-6, h=1e-4):
    """Check every parameter gradient of a store against central differences."""
    for li, layer in enumerate(store.layers):
        for name, arr, g in (("W", layer.W, grads[li][0]), ("b", layer.b, grads[li][1])):
            gf = np.asarray(g).reshape(-1)
            for i in range(arr.size):
                fd = fd_param_grad(loss_fn, arr, i, h)
                assert abs(gf[i] - fd) <= atol + rtol * max(abs(fd), abs(gf[i])), (
                    f"layer {li}, {name}[{i}]: analytic {gf[i]}, fd {fd}")
