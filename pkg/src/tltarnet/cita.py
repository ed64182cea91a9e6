"""Task affinity between causal datasets, measured on a frozen model.

A diagonal Fisher profile (mean squared per-example loss gradient, one entry
per parameter) is computed for the model on its own training data and on a
candidate dataset; the affinity score is the scaled Frobenius distance of the
elementwise square roots, minimized over the head-order permutations of the
binary treatment labels so that relabeled-but-identical tasks score 0.
"""

from dataclasses import dataclass

import numpy as np

from . import network
from .errors import DataError
from .model import sample_weights

HEAD_ORDERS = ("identity", "swapped")


@dataclass
class FisherDiagonal:
    values: np.ndarray  # flat, storage-order (W then b per layer), all >= 0
    n_samples: int


@dataclass
class CitaScore:
    raw: float
    normalized: float
    permutation: str
    one_sided_normalized: float = None


def _per_example_sq_grad_stack(acts, weights, n_relu, d_out):
    """Sum over examples of squared per-example gradients for one stack.

    Per-example dense-layer gradients factor as outer(act_i, delta_i), so the
    squared sum is (acts^2)^T @ (deltas^2) without materializing anything
    per example.  Returns (d_input, [(sqW, sqb), ...]).
    """
    L = len(weights)
    out = [None] * L
    d = d_out
    for i in range(L - 1, -1, -1):
        if i < n_relu:
            d = np.where(acts[i + 1] > 0.0, d, 0.0)
        out[i] = ((acts[i] ** 2).T @ (d ** 2), (d ** 2).sum(axis=0))
        d = d @ weights[i].T
    return d, out


def diag_fisher(model, data, head_order="identity"):
    """Diagonal Fisher profile of the per-example weighted squared factual
    loss; example i is routed to head t_i (identity) or 1-t_i (swapped)."""
    if head_order not in HEAD_ORDERS:
        raise ValueError(f"head_order must be one of {HEAD_ORDERS}")
    if data.n == 0:
        raise DataError("empty dataset")
    t = data.t
    if not ((t == 1).any() and (t == 0).any()):
        raise DataError("Fisher evaluation needs both treatment groups")
    store = model.store
    spec = model.spec
    acts = network.forward(store, data.X)
    route = t if head_order == "identity" else 1.0 - t
    yhat = np.where(route == 1, acts.y1, acts.y0)
    w = sample_weights(t)
    d = -2.0 * w * (data.y - yhat)  # grad of the per-example loss w.r.t. yhat
    d0 = np.where(route == 0, d, 0.0)[:, None]
    d1 = np.where(route == 1, d, 0.0)[:, None]

    n_hidden = len(spec.head_widths)
    d_phi = np.zeros_like(acts.phi)
    head_sq = []
    for head, (h_acts, dy) in enumerate(((acts.head0, d0), (acts.head1, d1))):
        hl = store.head_layers(head)
        dph, sq = _per_example_sq_grad_stack(h_acts, [l.W for l in hl], n_hidden, dy)
        d_phi += dph  # rows are disjoint between heads, so this stays per-example
        head_sq.append(sq)
    _, enc_sq = _per_example_sq_grad_stack(
        acts.encoder, [l.W for l in store.encoder_layers()], spec.n_encoder_layers, d_phi)

    ordered = list(enc_sq)
    for lvl in range(spec.n_head_levels):
        ordered.append(head_sq[0][lvl])
        ordered.append(head_sq[1][lvl])
    flat = np.concatenate([np.concatenate([sqW.ravel(), sqb]) for sqW, sqb in ordered])
    return FisherDiagonal(flat / data.n, data.n)


def cita_raw(f_ss, f_st):
    """(1/sqrt(2)) * || sqrt(F_ss) - sqrt(F_st) ||, elementwise roots."""
    a, b = f_ss.values, f_st.values
    if a.shape != b.shape:
        raise DataError(f"Fisher length mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(np.sqrt(a) - np.sqrt(b)) / np.sqrt(2.0))


def cita_normalized(f_ss, f_st):
    """Relative distance ||sqrt(F_ss)-sqrt(F_st)|| / (||sqrt(F_ss)||+||sqrt(F_st)||),
    in [0,1] by the triangle inequality."""
    a, b = np.sqrt(f_ss.values), np.sqrt(f_st.values)
    if a.shape != b.shape:
        raise DataError(f"Fisher length mismatch: {a.shape} vs {b.shape}")
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom == 0.0:
        raise DataError("both Fisher diagonals are zero; score undefined")
    return float(np.linalg.norm(a - b) / denom)


def cita_symmetrized(model, source_data, target_data):
    """Label-permutation-symmetrized score: evaluate the target Fisher under
    both head orders and keep the smaller normalized distance."""
    f_ss = diag_fisher(model, source_data, "identity")
    best = None
    one_sided = None
    for order in HEAD_ORDERS:
        f_st = diag_fisher(model, target_data, order)
        score = cita_normalized(f_ss, f_st)
        if order == "identity":
            one_sided = score
        if best is None or score < best[0]:
            best = (score, cita_raw(f_ss, f_st), order)
    return CitaScore(raw=best[1], normalized=best[0], permutation=best[2],
                     one_sided_normalized=one_sided)
