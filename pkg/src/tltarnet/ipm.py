"""Differentiable two-sample distances in representation space.

Two estimators of the group imbalance penalty: an RBF-kernel MMD
(biased V-statistic) and a debiased Sinkhorn divergence approximating the
1-Wasserstein distance (Euclidean ground cost).  Both return gradients with
respect to every input row on request, so the penalty can be backpropagated
into the encoder.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError

_TINY = 1e-12


@dataclass
class IpmConfig:
    kind: str = "mmd_rbf"  # "mmd_rbf" | "sinkhorn"
    bandwidth: float = None  # None -> median pairwise distance of the pooled batch
    epsilon: float = None  # None -> 0.1 * median cost
    max_iters: int = 200
    convergence_tol: float = 1e-6

    def __post_init__(self):
        if self.kind not in ("mmd_rbf", "sinkhorn"):
            raise ValueError(f"unknown IPM kind {self.kind!r}")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")

    def to_dict(self):
        return {"kind": self.kind, "bandwidth": self.bandwidth, "epsilon": self.epsilon,
                "max_iters": self.max_iters, "convergence_tol": self.convergence_tol}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class IpmResult:
    value: float
    grad_a: np.ndarray = None
    grad_b: np.ndarray = None
    converged: bool = True


def _check_sets(a, b):
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise DataError("IPM needs non-empty sample sets")
    if a.shape[1] != b.shape[1]:
        raise DataError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return a, b


def _pairwise_dist(a, b):
    sq = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
          - 2.0 * (a @ b.T))
    return np.sqrt(np.maximum(sq, 0.0))


def median_bandwidth(a, b):
    """Median pairwise distance of the pooled rows (median heuristic)."""
    pooled = np.vstack([a, b])
    d = _pairwise_dist(pooled, pooled)
    off = d[np.triu_indices(len(pooled), k=1)]
    if off.size == 0:
        return 1.0
    med = float(np.median(off))
    return med if med > 0 else 1.0


def mmd_rbf(a, b, cfg, with_grad=False):
    """Biased MMD estimator mean k(a,a) + mean k(b,b) - 2 mean k(a,b),
    k(u,v) = exp(-||u-v||^2 / (2 bw^2)), clamped at 0."""
    a, b = _check_sets(a, b)
    bw = cfg.bandwidth if cfg.bandwidth is not None else median_bandwidth(a, b)
    n, m = len(a), len(b)
    s2 = 2.0 * bw * bw
    Kaa = np.exp(-_pairwise_dist(a, a) ** 2 / s2)
    Kbb = np.exp(-_pairwise_dist(b, b) ** 2 / s2)
    Kab = np.exp(-_pairwise_dist(a, b) ** 2 / s2)
    value = max(float(Kaa.mean() + Kbb.mean() - 2.0 * Kab.mean()), 0.0)
    if not with_grad:
        return IpmResult(value)
    # d k(u,v)/du = k(u,v) (v-u)/bw^2; bandwidth treated as a constant
    inv = 1.0 / (bw * bw)
    ga = (2.0 * inv / (n * n)) * (Kaa @ a - Kaa.sum(axis=1)[:, None] * a) \
        - (2.0 * inv / (n * m)) * (Kab @ b - Kab.sum(axis=1)[:, None] * a)
    gb = (2.0 * inv / (m * m)) * (Kbb @ b - Kbb.sum(axis=1)[:, None] * b) \
        - (2.0 * inv / (n * m)) * (Kab.T @ a - Kab.sum(axis=0)[:, None] * b)
    return IpmResult(value, ga, gb)


def _logsumexp(M, axis):
    mx = np.max(M, axis=axis, keepdims=True)
    out = mx + np.log(np.sum(np.exp(M - mx), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def _sinkhorn_ot(a, b, epsilon, max_iters, tol):
    """Entropic OT with uniform marginals, log-domain iterations.

    Returns (cost, plan, dist_matrix, converged); cost is the converged dual
    value <f,mu> + <g,nu>.
    """
    n, m = len(a), len(b)
    C = _pairwise_dist(a, b)
    mu = 1.0 / n
    nu = 1.0 / m
    f = np.zeros(n)
    g = np.zeros(m)
    lognu = np.log(nu)
    logmu = np.log(mu)
    converged = False
    for _ in range(max_iters):
        f = -epsilon * _logsumexp((g[None, :] - C) / epsilon + lognu, axis=1)
        g = -epsilon * _logsumexp((f[:, None] - C) / epsilon + logmu, axis=0)
        # rows were rescaled before g: check row-marginal violation now
        P = np.exp((f[:, None] + g[None, :] - C) / epsilon) * (mu * nu)
        if np.abs(P.sum(axis=1) - mu).sum() < tol:
            converged = True
            break
    cost = float(f.sum() * mu + g.sum() * nu)
    return cost, P, C, converged


def _ot_position_grads(P, C, a, b):
    """Gradients of the converged OT cost w.r.t. sample positions
    (Danskin: d/dx_i = sum_j P_ij d||x_i-y_j||/dx_i)."""
    U = P / np.maximum(C, _TINY)
    U[C < _TINY] = 0.0
    ga = U.sum(axis=1)[:, None] * a - U @ b
    gb = U.sum(axis=0)[:, None] * b - U.T @ a
    return ga, gb


def sinkhorn_divergence(a, b, cfg, with_grad=False):
    """Debiased divergence S(a,b) = OT(a,b) - OT(a,a)/2 - OT(b,b)/2,
    clamped at 0; zero on identical multisets."""
    a, b = _check_sets(a, b)
    eps = cfg.epsilon
    if eps is None:
        C = _pairwise_dist(a, b)
        med = float(np.median(C))
        eps = 0.1 * med if med > 0 else 0.1
    c_ab, P_ab, C_ab, ok1 = _sinkhorn_ot(a, b, eps, cfg.max_iters, cfg.convergence_tol)
    c_aa, P_aa, C_aa, ok2 = _sinkhorn_ot(a, a, eps, cfg.max_iters, cfg.convergence_tol)
    c_bb, P_bb, C_bb, ok3 = _sinkhorn_ot(b, b, eps, cfg.max_iters, cfg.convergence_tol)
    value = max(c_ab - 0.5 * c_aa - 0.5 * c_bb, 0.0)
    converged = ok1 and ok2 and ok3
    if not with_grad:
        return IpmResult(value, converged=converged)
    ga, gb = _ot_position_grads(P_ab, C_ab, a, b)
    saa_1, saa_2 = _ot_position_grads(P_aa, C_aa, a, a)
    sbb_1, sbb_2 = _ot_position_grads(P_bb, C_bb, b, b)
    grad_a = ga - 0.5 * (saa_1 + saa_2)
    grad_b = gb - 0.5 * (sbb_1 + sbb_2)
    return IpmResult(value, grad_a, grad_b, converged)


def ipm(a, b, cfg, with_grad=False):
    """Dispatch to the configured estimator."""
    if cfg.kind == "mmd_rbf":
        return mmd_rbf(a, b, cfg, with_grad)
    return sinkhorn_divergence(a, b, cfg, with_grad)
