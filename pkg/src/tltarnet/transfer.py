"""Transfer pipeline: transplant a trained source model, freeze early
layers, align representations across domains (phase 1), then fine-tune the
factual loss on the target (phase 2)."""

from dataclasses import dataclass, field

import numpy as np

from . import network
from .errors import DataError, NumericalError
from .ipm import IpmConfig, ipm
from .model import TarnetModel, factual_loss, predict_ite, stratified_batches
from .optim import adam_step, init_optimizer


@dataclass
class PhaseConfig:
    learning_rate: float = 1e-5
    epochs: int = 1500
    batch_size: int = 32  # phase 2 only; phase 1 is full-batch
    ipm: IpmConfig = field(default_factory=IpmConfig)

    def to_dict(self):
        return {"learning_rate": self.learning_rate, "epochs": self.epochs,
                "batch_size": self.batch_size, "ipm": self.ipm.to_dict()}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["ipm"] = IpmConfig.from_dict(d["ipm"])
        return cls(**d)


@dataclass
class TransferConfig:
    freeze_depth: int = None  # None -> all encoder layers but the last
    phase1: PhaseConfig = field(default_factory=PhaseConfig)
    phase2: PhaseConfig = field(default_factory=lambda: PhaseConfig(learning_rate=1e-5))
    lambda_tt: float = 1.0  # treated target vs treated source
    lambda_cc: float = 1.0  # control target vs control source
    lambda_wt: float = 1.0  # control vs treated within target
    source_ref_size: int = 2000  # source rows sampled for phase-1 alignment
    seed: int = 0

    def __post_init__(self):
        if any(l < 0 for l in (self.lambda_tt, self.lambda_cc, self.lambda_wt)):
            raise ValueError("lambda weights must be non-negative")
        if self.source_ref_size < 1:
            raise ValueError("source_ref_size must be >= 1")

    def to_dict(self):
        return {"freeze_depth": self.freeze_depth,
                "phase1": self.phase1.to_dict(), "phase2": self.phase2.to_dict(),
                "lambda_tt": self.lambda_tt, "lambda_cc": self.lambda_cc,
                "lambda_wt": self.lambda_wt, "source_ref_size": self.source_ref_size,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["phase1"] = PhaseConfig.from_dict(d["phase1"])
        d["phase2"] = PhaseConfig.from_dict(d["phase2"])
        return cls(**d)


@dataclass
class TransferReport:
    phase1_trace: list = field(default_factory=list)  # dicts: total + per-term values
    phase2_trace: list = field(default_factory=list)  # factual loss per epoch
    final_ipms: dict = field(default_factory=dict)
    mean_ite_pre: float = None
    mean_ite_post: float = None


def transplant(source_model, freeze_depth=None):
    """Copy all source parameters into a fresh model with the first
    freeze_depth layers frozen; the rest stay warm-started but trainable."""
    n_layers = source_model.spec.n_layers
    if freeze_depth is None:
        # leave the last encoder layer (and all head layers) trainable so the
        # alignment phase can actually move the representation
        freeze_depth = source_model.spec.n_encoder_layers - 1
    if not 0 <= freeze_depth < n_layers:
        raise DataError(f"freeze_depth {freeze_depth} leaves no trainable layer "
                        f"(model has {n_layers})")
    store = network.freeze_layers(source_model.store, freeze_depth)
    return TarnetModel(source_model.spec, store)


def _group_phis(phi, t):
    return phi[t == 0], phi[t == 1]


def alignment_loss(model, source_X, source_t, target_X, target_t, cfg,
                   with_grads=False):
    """Weighted sum of the three alignment distances:
    lambda_tt * IPM(treated target, treated source)
    + lambda_cc * IPM(control target, control source)
    + lambda_wt * IPM(control target, treated target).

    Returns (total, terms dict, grads|None, converged).  Outcomes are never
    read here.  Terms with zero weight are not evaluated.
    """
    terms = {"tt": 0.0, "cc": 0.0, "wt": 0.0}
    converged = True
    acts_t = network.forward(model.store, target_X)
    d_phi_t = np.zeros_like(acts_t.phi) if with_grads else None
    need_source = cfg.lambda_tt > 0 or cfg.lambda_cc > 0
    acts_s = network.forward(model.store, source_X) if need_source else None
    d_phi_s = np.zeros_like(acts_s.phi) if (with_grads and need_source) else None

    tmask = np.asarray(target_t) == 1
    smask = np.asarray(source_t) == 1 if need_source else None

    def accumulate(lam, key, a_phi, a_sel, a_buf, b_phi, b_sel, b_buf):
        nonlocal converged
        if lam <= 0:
            return
        if not a_sel.any() or not b_sel.any():
            raise DataError(f"alignment term {key}: empty treatment group")
        res = ipm(a_phi[a_sel], b_phi[b_sel], cfg.phase1.ipm, with_grad=with_grads)
        terms[key] = res.value
        converged = converged and res.converged
        if with_grads:
            a_buf[a_sel] += lam * res.grad_a
            b_buf[b_sel] += lam * res.grad_b

    accumulate(cfg.lambda_tt, "tt", acts_t.phi, tmask, d_phi_t,
               acts_s.phi if need_source else None, smask, d_phi_s)
    accumulate(cfg.lambda_cc, "cc", acts_t.phi, ~tmask, d_phi_t,
               acts_s.phi if need_source else None,
               ~smask if need_source else None, d_phi_s)
    accumulate(cfg.lambda_wt, "wt", acts_t.phi, ~tmask, d_phi_t,
               acts_t.phi, tmask, d_phi_t)

    total = (cfg.lambda_tt * terms["tt"] + cfg.lambda_cc * terms["cc"]
             + cfg.lambda_wt * terms["wt"])
    if not with_grads:
        return total, terms, None, converged

    zero = np.zeros(len(target_X))
    grads = network.backward(model.store, acts_t, zero, zero, d_phi_t)
    if need_source:
        zero_s = np.zeros(len(source_X))
        grads_s = network.backward(model.store, acts_s, zero_s, zero_s, d_phi_s)
        grads = [(gw + gw2, gb + gb2) for (gw, gb), (gw2, gb2) in zip(grads, grads_s)]
    return total, terms, grads, converged


def phase1_align(model, source_data, target_data, cfg):
    """Full-batch Adam on the alignment loss; outcomes are never touched.

    The source side is a fixed random reference sample of at most
    cfg.source_ref_size rows, drawn once per run.
    """
    rng = np.random.default_rng([int(cfg.seed), 10])
    n_ref = min(source_data.n, cfg.source_ref_size)
    ref = rng.choice(source_data.n, size=n_ref, replace=False)
    sX, st = source_data.X[ref], source_data.t[ref]
    tX, tt = target_data.X, target_data.t

    opt = init_optimizer(model.store, cfg.phase1.learning_rate)
    trace = []
    try:
        for _ in range(cfg.phase1.epochs):
            total, terms, grads, _ = alignment_loss(model, sX, st, tX, tt, cfg,
                                                    with_grads=True)
            if not np.isfinite(total):
                raise NumericalError(f"non-finite alignment loss at epoch {len(trace)}")
            adam_step(model.store, grads, opt)
            trace.append({"total": total, **terms})
    except NumericalError as e:
        e.trace = trace
        e.phase = 1
        raise
    return model, trace


def phase2_finetune(model, target_data, cfg):
    """Mini-batch Adam on the target factual loss only; no cross-domain
    terms are ever evaluated here."""
    rng = np.random.default_rng([int(cfg.seed), 20])
    X, t, y = target_data.X, target_data.t, target_data.y
    batch_size = min(cfg.phase2.batch_size, target_data.n)
    opt = init_optimizer(model.store, cfg.phase2.learning_rate)
    trace = []
    try:
        for _ in range(cfg.phase2.epochs):
            ep_loss = 0.0
            for idx in stratified_batches(rng, t, batch_size):
                loss, grads = factual_loss(model, X[idx], t[idx], y[idx],
                                           with_grads=True)
                if not np.isfinite(loss):
                    raise NumericalError(f"non-finite factual loss at epoch {len(trace)}")
                adam_step(model.store, grads, opt)
                ep_loss += loss * len(idx) / len(X)
            trace.append(ep_loss)
    except NumericalError as e:
        e.trace = trace
        e.phase = 2
        raise
    return model, trace


def transfer_pipeline(source_model, source_data, target_data, cfg):
    """transplant -> phase 1 alignment -> phase 2 fine-tuning."""
    model = transplant(source_model, cfg.freeze_depth)
    report = TransferReport()
    report.mean_ite_pre = float(np.mean(predict_ite(model, target_data.X)))
    model, report.phase1_trace = phase1_align(model, source_data, target_data, cfg)
    model, report.phase2_trace = phase2_finetune(model, target_data, cfg)
    report.mean_ite_post = float(np.mean(predict_ite(model, target_data.X)))

    # final alignment distances, measured with the same reference sample
    rng = np.random.default_rng([int(cfg.seed), 10])
    n_ref = min(source_data.n, cfg.source_ref_size)
    ref = rng.choice(source_data.n, size=n_ref, replace=False)
    eval_cfg = TransferConfig(freeze_depth=cfg.freeze_depth, phase1=cfg.phase1,
                              phase2=cfg.phase2, lambda_tt=1.0, lambda_cc=1.0,
                              lambda_wt=1.0, source_ref_size=cfg.source_ref_size,
                              seed=cfg.seed)
    _, terms, _, _ = alignment_loss(model, source_data.X[ref], source_data.t[ref],
                                    target_data.X, target_data.t, eval_cfg)
    report.final_ipms = terms
    return model, report
