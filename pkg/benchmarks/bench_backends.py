"""Compare the compiled and pure-numpy kernel backends.

Times the three hot kernels (forward, backward, Adam) and a full training
step at a few batch sizes.  Run as:

    python benchmarks/bench_backends.py
"""

import time

import numpy as np

from tltarnet import TrainConfig, gen_source
from tltarnet.backend import get_backend
from tltarnet.data import DgpParams
from tltarnet.model import init_model, total_loss
from tltarnet.network import NetworkSpec
from tltarnet.optim import adam_step, init_optimizer


def timeit(fn, repeat=200):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench_kernels(impl, batch):
    rng = np.random.default_rng(0)
    dims = [5, 16, 16, 16]
    Ws = [np.ascontiguousarray(rng.standard_normal((a, b)))
          for a, b in zip(dims, dims[1:])]
    bs = [rng.standard_normal(b) for b in dims[1:]]
    X = rng.standard_normal((batch, 5))
    d_out = rng.standard_normal((batch, 16))
    acts = impl.forward_stack(X, Ws, bs, 3)

    fwd = timeit(lambda: impl.forward_stack(X, Ws, bs, 3))
    bwd = timeit(lambda: impl.backward_stack(acts, Ws, 3, d_out.copy()))

    w = rng.standard_normal((16, 16))
    g = rng.standard_normal((16, 16))
    m = np.zeros((16, 16))
    v = np.zeros((16, 16))
    adam = timeit(lambda: impl.adam_update(w, g, m, v, 1, 1e-3, 0.9, 0.999, 1e-8))
    return fwd, bwd, adam


def bench_train_step(batch, seed=0):
    data = gen_source(batch, DgpParams(), seed)
    model = init_model(NetworkSpec(5, (16, 16, 16), (8, 8)), seed)
    cfg = TrainConfig(epochs=1, batch_size=batch)
    opt = init_optimizer(model.store, cfg.learning_rate)

    def step():
        _, _, _, grads, _ = total_loss(model, data.X, data.t, data.y, cfg,
                                       with_grads=True)
        adam_step(model.store, grads, opt)

    return timeit(step, repeat=100)


def main():
    backends = {}
    backends["pure"] = get_backend("pure")
    try:
        backends["compiled"] = get_backend("compiled")
    except ImportError:
        print("compiled extension not built; benchmarking pure only")

    print(f"{'backend':>9} {'batch':>6} {'forward':>10} {'backward':>10} {'adam':>10}")
    for name, impl in backends.items():
        for batch in (32, 256, 2048):
            fwd, bwd, adam = bench_kernels(impl, batch)
            print(f"{name:>9} {batch:>6} {fwd * 1e6:>9.1f}u {bwd * 1e6:>9.1f}u "
                  f"{adam * 1e6:>9.1f}u")

    from tltarnet.backend import BACKEND_NAME
    print(f"\nfull training step (active backend: {BACKEND_NAME})")
    for batch in (32, 256):
        print(f"  batch {batch:>4}: {bench_train_step(batch) * 1e6:.1f}us")


if __name__ == "__main__":
    main()
