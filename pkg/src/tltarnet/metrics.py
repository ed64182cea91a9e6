"""Evaluation statistics: PEHE, mean ITE, dispersion, and per-scenario
aggregation across replications."""

from dataclasses import dataclass

import numpy as np

from .errors import DataError


def pehe(tau_hat, tau_true):
    """Mean squared error between estimated and true ITEs (squared PEHE).
    Report sqrt(pehe(...)) separately as the RMSE flavor."""
    tau_hat = np.asarray(tau_hat, dtype=np.float64)
    tau_true = np.asarray(tau_true, dtype=np.float64)
    if tau_hat.shape != tau_true.shape:
        raise DataError(f"length mismatch: {tau_hat.shape} vs {tau_true.shape}")
    if tau_hat.size == 0:
        raise DataError("empty ITE vectors")
    return float(np.mean((tau_hat - tau_true) ** 2))


def mean_ite(tau_hat):
    tau_hat = np.asarray(tau_hat, dtype=np.float64)
    if tau_hat.size == 0:
        raise DataError("empty ITE vector")
    return float(tau_hat.mean())


def dispersion(tau_hat):
    """(sample SD with n-1 denominator, SE = sd/sqrt(n)); SD 0 for n=1."""
    tau_hat = np.asarray(tau_hat, dtype=np.float64)
    if tau_hat.size == 0:
        raise DataError("empty ITE vector")
    if tau_hat.size == 1:
        return 0.0, 0.0
    sd = float(tau_hat.std(ddof=1))
    return sd, sd / np.sqrt(tau_hat.size)


@dataclass
class ReplicationResult:
    n_source: int
    n_target: int
    sampling: str  # "random" | "biased"
    method: str  # "tarnet" | "tl-tarnet"
    seed: int
    mean_ite: float
    pehe_sq: float
    cita: float = None

    def key(self):
        return (self.n_source, self.n_target, self.sampling, self.method)


@dataclass
class ScenarioSummary:
    n_source: int
    n_target: int
    sampling: str
    method: str
    replications: int
    mean_ite: float
    bias: float
    se: float  # across-replication SE of mean ITE; None for R=1
    pehe_sq_mean: float
    pehe_rmse_mean: float
    cita_mean: float = None

    def row(self):
        return {"n_source": self.n_source, "n_target": self.n_target,
                "sampling": self.sampling, "method": self.method,
                "R": self.replications, "mean_ite": self.mean_ite,
                "bias": self.bias, "se": "" if self.se is None else self.se,
                "pehe_sq_mean": self.pehe_sq_mean,
                "pehe_rmse_mean": self.pehe_rmse_mean,
                "cita_mean": "" if self.cita_mean is None else self.cita_mean}

SUMMARY_COLUMNS = ["n_source", "n_target", "sampling", "method", "R", "mean_ite",
                   "bias", "se", "pehe_sq_mean", "pehe_rmse_mean", "cita_mean"]


def summarize(results, beta):
    """Group replication results by scenario and aggregate; bias is measured
    against the DGP's average effect beta.  Output order is sorted by key."""
    if not results:
        raise DataError("no replication results to summarize")
    groups = {}
    for r in results:
        groups.setdefault(r.key(), []).append(r)
    out = []
    for key in sorted(groups):
        rs = groups[key]
        means = np.array([r.mean_ite for r in rs])
        pehes = np.array([r.pehe_sq for r in rs])
        citas = [r.cita for r in rs if r.cita is not None]
        se = None
        if len(rs) > 1:
            se = float(means.std(ddof=1) / np.sqrt(len(rs)))
        out.append(ScenarioSummary(
            n_source=key[0], n_target=key[1], sampling=key[2], method=key[3],
            replications=len(rs), mean_ite=float(means.mean()),
            bias=float(means.mean() - beta), se=se,
            pehe_sq_mean=float(pehes.mean()),
            pehe_rmse_mean=float(np.sqrt(pehes).mean()),
            cita_mean=float(np.mean(citas)) if citas else None))
    return out
