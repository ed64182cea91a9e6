"""TARNet/CFR model: weighted factual loss, optional representation-balance
penalty, mini-batch source training, ITE prediction."""

from dataclasses import dataclass, field

import numpy as np

from . import network
from .errors import DataError, NumericalError, SingleGroupError
from .ipm import IpmConfig, ipm
from .optim import adam_step, init_optimizer


@dataclass
class TarnetModel:
    spec: network.NetworkSpec
    store: network.ParameterStore

    def copy(self):
        return TarnetModel(self.spec, self.store.copy())


@dataclass
class TrainConfig:
    learning_rate: float = 0.005
    epochs: int = 700
    batch_size: int = 32
    alpha: float = 0.0  # 0 -> plain TARNet, >0 -> CFR balance penalty
    ipm: IpmConfig = field(default_factory=IpmConfig)
    seed: int = 0
    train_fraction: float = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("bad TrainConfig: lr>0, epochs>=0, batch_size>=1 required")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if not 0 < self.train_fraction <= 1:
            raise ValueError("train_fraction must be in (0, 1]")

    def to_dict(self):
        return {"learning_rate": self.learning_rate, "epochs": self.epochs,
                "batch_size": self.batch_size, "alpha": self.alpha,
                "ipm": self.ipm.to_dict(), "seed": self.seed,
                "train_fraction": self.train_fraction}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["ipm"] = IpmConfig.from_dict(d["ipm"])
        return cls(**d)


@dataclass
class TrainHistory:
    factual: list = field(default_factory=list)
    ipm: list = field(default_factory=list)
    total: list = field(default_factory=list)
    skipped_batches: list = field(default_factory=list)
    holdout_factual: float = None

    def rows(self):
        for e in range(len(self.factual)):
            yield {"epoch": e, "factual": self.factual[e], "ipm": self.ipm[e],
                   "total": self.total[e], "skipped_batches": self.skipped_batches[e]}


def init_model(spec, seed):
    return TarnetModel(spec, network.init_network(spec, seed))


def tarnet_forward(model, x):
    """(y0_hat, y1_hat, phi) for one covariate row or a batch."""
    acts = network.forward(model.store, x)
    if acts.single:
        return float(acts.y0[0]), float(acts.y1[0]), acts.phi[0]
    return acts.y0, acts.y1, acts.phi


def sample_weights(t):
    """Group-balancing weights w_i = t_i/(2v) + (1-t_i)/(2(1-v)), v = mean(t)."""
    t = np.asarray(t, dtype=np.float64)
    v = t.mean()
    if v == 0.0 or v == 1.0:
        raise SingleGroupError("weights undefined: batch has a single treatment group")
    return t / (2.0 * v) + (1.0 - t) / (2.0 * (1.0 - v))


def _factual_from_acts(acts, t, y, with_grads):
    n = len(t)
    w = sample_weights(t)
    yhat = np.where(t == 1, acts.y1, acts.y0)
    resid = y - yhat
    loss = float(np.mean(w * resid ** 2))
    if not with_grads:
        return loss, None, None
    d = -2.0 * w * resid / n
    d_y0 = np.where(t == 0, d, 0.0)
    d_y1 = np.where(t == 1, d, 0.0)
    return loss, d_y0, d_y1


def factual_loss(model, X, t, y, with_grads=False):
    """Sample-weighted mean squared factual error; each example only sends
    gradient into the head of its observed arm."""
    acts = network.forward(model.store, X)
    loss, d_y0, d_y1 = _factual_from_acts(acts, np.asarray(t, dtype=np.float64),
                                          np.asarray(y, dtype=np.float64), with_grads)
    if not with_grads:
        return loss
    grads = network.backward(model.store, acts, d_y0, d_y1)
    return loss, grads


def total_loss(model, X, t, y, cfg, with_grads=False, allow_skip=False):
    """factual + alpha * IPM(control representations, treated representations).

    With alpha=0 the IPM estimator is never invoked.  allow_skip makes a
    single-group IPM evaluation a recorded skip instead of an error (the
    factual term still requires both groups).
    returns (total, factual, ipm_value, grads|None, skipped)
    """
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    acts = network.forward(model.store, X)
    floss, d_y0, d_y1 = _factual_from_acts(acts, t, y, with_grads)
    ipm_value = 0.0
    skipped = False
    d_phi = None
    if cfg.alpha > 0:
        ctrl = t == 0
        trt = t == 1
        if ctrl.any() and trt.any():
            res = ipm(acts.phi[ctrl], acts.phi[trt], cfg.ipm, with_grad=with_grads)
            ipm_value = res.value
            if with_grads:
                d_phi = np.zeros_like(acts.phi)
                d_phi[ctrl] = cfg.alpha * res.grad_a
                d_phi[trt] = cfg.alpha * res.grad_b
        elif allow_skip:
            skipped = True
        else:
            raise SingleGroupError("IPM undefined: batch has a single treatment group")
    total = floss + cfg.alpha * ipm_value
    if not with_grads:
        return total, floss, ipm_value, None, skipped
    grads = network.backward(model.store, acts, d_y0, d_y1, d_phi)
    return total, floss, ipm_value, grads, skipped


def stratified_batches(rng, t, batch_size):
    """Batch index lists that keep the global treated fraction per batch
    where counts allow, so single-group batches are rare."""
    n = len(t)
    treated = np.flatnonzero(t == 1)
    control = np.flatnonzero(t == 0)
    rng.shuffle(treated)
    rng.shuffle(control)
    n_batches = max(1, int(np.ceil(n / batch_size)))
    tr_chunks = np.array_split(treated, n_batches)
    ct_chunks = np.array_split(control, n_batches)
    return [np.concatenate([a, b]) for a, b in zip(tr_chunks, ct_chunks)]


def _stratified_split(rng, t, fraction):
    """Train/holdout split preserving the treated fraction."""
    n = len(t)
    n_train = int(round(fraction * n))
    if n_train >= n:
        return np.arange(n), np.array([], dtype=int)
    treated = np.flatnonzero(t == 1)
    control = np.flatnonzero(t == 0)
    rng.shuffle(treated)
    rng.shuffle(control)
    k_t = int(round(fraction * len(treated)))
    train = np.concatenate([treated[:k_t], control[: n_train - k_t]])
    hold = np.setdiff1d(np.arange(n), train)
    return np.sort(train), hold


def train_source(data, spec, cfg):
    """Mini-batch Adam training of the total loss for cfg.epochs.

    Deterministic given (spec, seed, data, config).  Divergence aborts with
    a NumericalError carrying the history so far (e.history).
    """
    t = data.t
    if not ((t == 1).any() and (t == 0).any()):
        raise DataError("training data must contain both treatment groups")
    model = init_model(spec, np.random.SeedSequence([int(cfg.seed), 0]).generate_state(1)[0])
    split_rng = np.random.default_rng([int(cfg.seed), 1])
    batch_rng = np.random.default_rng([int(cfg.seed), 2])
    train_idx, hold_idx = _stratified_split(split_rng, t, cfg.train_fraction)
    X_tr, t_tr, y_tr = data.X[train_idx], data.t[train_idx], data.y[train_idx]
    if cfg.batch_size > len(train_idx):
        raise DataError(f"batch_size {cfg.batch_size} exceeds training set size {len(train_idx)}")

    opt = init_optimizer(model.store, cfg.learning_rate)
    hist = TrainHistory()
    try:
        for _ in range(cfg.epochs):
            ep_f = ep_i = ep_tot = 0.0
            skipped = 0
            batches = stratified_batches(batch_rng, t_tr, cfg.batch_size)
            for idx in batches:
                tot, fl, iv, grads, skip = total_loss(
                    model, X_tr[idx], t_tr[idx], y_tr[idx], cfg,
                    with_grads=True, allow_skip=True)
                if not np.isfinite(tot):
                    raise NumericalError(f"non-finite loss at epoch {len(hist.factual)}")
                adam_step(model.store, grads, opt)
                frac = len(idx) / len(train_idx)
                ep_f += fl * frac
                ep_i += iv * frac
                ep_tot += tot * frac
                skipped += int(skip)
            hist.factual.append(ep_f)
            hist.ipm.append(ep_i)
            hist.total.append(ep_tot)
            hist.skipped_batches.append(skipped)
    except NumericalError as e:
        e.history = hist
        raise
    if len(hold_idx):
        hist.holdout_factual = factual_loss(model, data.X[hold_idx], data.t[hold_idx],
                                            data.y[hold_idx])
    return model, hist


def predict_ite(model, X):
    """Per-row y1_hat - y0_hat."""
    acts = network.forward(model.store, np.atleast_2d(np.asarray(X, dtype=np.float64)))
    return acts.y1 - acts.y0


def representations(model, X):
    acts = network.forward(model.store, np.atleast_2d(np.asarray(X, dtype=np.float64)))
    return acts.phi
