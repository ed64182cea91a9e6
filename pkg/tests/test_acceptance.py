"""End-to-end acceptance checks for the toolkit.

Each test prints one live pass/fail line.  The simulation-grid checks share
a single study run (N_source=5000, N_target in {50, 100}, both sampling
regimes, 20 replications), which takes a few minutes on one CPU.
"""

import numpy as np
import pytest

from tltarnet import (CsvSchema, DgpParams, IpmConfig, PhaseConfig,
                      TarnetModel, TrainConfig, TransferConfig, gen_source,
                      init_model, load_checkpoint, load_csv, mmd_rbf,
                      predict_ite, save_csv, sinkhorn_divergence,
                      subsample_biased, subsample_random, train_source,
                      transfer_pipeline)
from tltarnet import network
from tltarnet.cita import cita_symmetrized, diag_fisher
from tltarnet.data import Dataset
from tltarnet.experiment import (ROLE_SOURCE, SAMPLING_ROLES, ExperimentConfig,
                                 cmd_full_study, derive_seed)
from tltarnet.network import NetworkSpec, parameter_count

from conftest import assert_grads_match_fd
from test_cita import dense_fisher_oracle

DGP = DgpParams()  # treatment effect beta = 1

STUDY_CONFIG = ExperimentConfig(
    source_sizes=[5000], target_sizes=[50, 100],
    sampling=["random", "biased"], replications=20,
    spec=NetworkSpec(5, (16, 16, 16), (8, 8)),
    source_train=TrainConfig(learning_rate=0.005, epochs=150, batch_size=32),
    target_train=TrainConfig(learning_rate=0.005, epochs=600, batch_size=100),
    transfer=TransferConfig(phase1=PhaseConfig(1e-5, 300, ipm=IpmConfig()),
                            phase2=PhaseConfig(1e-5, 300, batch_size=16),
                            source_ref_size=500),
    master_seed=7)


@pytest.fixture
def announce(capsys):
    def _check(num, desc, ok, detail=""):
        line = f"[criterion {num}] {'PASS' if ok else 'FAIL'}: {desc}"
        if detail:
            line += f" ({detail})"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return _check


@pytest.fixture(scope="module")
def study(tmp_path_factory):
    out = tmp_path_factory.mktemp("study")
    summaries, errors = cmd_full_study(STUDY_CONFIG, out)
    assert errors == []
    by_cell = {(s.n_target, s.sampling, s.method): s for s in summaries}
    return out, by_cell


def test_criterion_1_parameter_count(announce):
    n = parameter_count(NetworkSpec(5, (16, 16, 16), (8, 8)))
    announce(1, "parameter count of the reference architecture is 1074",
             n == 1074, f"got {n}")


def test_criterion_2_randomized_targets_unbiased(study, announce):
    _, by_cell = study
    worst = max(abs(by_cell[(nt, "random", m)].mean_ite - 1.0)
                for nt in (50, 100) for m in ("tarnet", "tl-tarnet"))
    announce(2, "random targets: |mean ITE - 1| <= 0.15 for both methods",
             worst <= 0.15, f"worst deviation {worst:.3f}")


def test_criterion_3_bias_reduction_under_confounding(study, announce):
    _, by_cell = study
    ok = True
    details = []
    for nt in (50, 100):
        plain = by_cell[(nt, "biased", "tarnet")]
        tl = by_cell[(nt, "biased", "tl-tarnet")]
        ok &= plain.mean_ite > 1.3
        ok &= abs(tl.bias) <= 0.5 * abs(plain.bias)
        details.append(f"n_t={nt}: plain {plain.mean_ite:.2f}, tl {tl.mean_ite:.2f}")
    announce(3, "biased targets: plain mean ITE > 1.3 and transfer halves the bias",
             ok, "; ".join(details))


def test_criterion_4_pehe_improvement(study, announce):
    _, by_cell = study
    ok = True
    details = []
    for nt in (50, 100):
        for sampling in ("random", "biased"):
            plain = by_cell[(nt, sampling, "tarnet")].pehe_sq_mean
            tl = by_cell[(nt, sampling, "tl-tarnet")].pehe_sq_mean
            ok &= tl < plain
            details.append(f"{sampling}@{nt}: {tl:.2f} vs {plain:.2f}")
    announce(4, "mean squared PEHE: transfer beats target-only in every cell",
             ok, "; ".join(details))


def test_criterion_5_cita_ordering(study, announce):
    out, _ = study
    cfg = STUDY_CONFIG
    rand_scores, bias_scores = [], []
    for rep in range(10):
        store, spec = load_checkpoint(out / "checkpoints"
                                      / f"source_ns5000_rep{rep}.json")
        model = TarnetModel(spec, store)
        source = gen_source(5000, cfg.dgp,
                            derive_seed(cfg.master_seed, ROLE_SOURCE, 5000, rep))
        t_rand = subsample_random(
            source, 250, derive_seed(cfg.master_seed, SAMPLING_ROLES["random"],
                                     5000, rep, 250))
        t_bias = subsample_biased(
            source, 250, derive_seed(cfg.master_seed, SAMPLING_ROLES["biased"],
                                     5000, rep, 250))
        rand_scores.append(cita_symmetrized(model, source, t_rand).normalized)
        bias_scores.append(cita_symmetrized(model, source, t_bias).normalized)
    mr, mb = np.mean(rand_scores), np.mean(bias_scores)
    announce(5, "mean normalized affinity score: random target < biased target",
             mr < mb, f"{mr:.4f} vs {mb:.4f}")


def test_criterion_6_label_flip_identity(announce):
    data = gen_source(400, DGP, 11)
    model, _ = train_source(data, NetworkSpec(5, (8,), (4,)),
                            TrainConfig(epochs=30, seed=0))
    flipped = Dataset(data.X, 1.0 - data.t, data.y, y0=data.y1, y1=data.y0,
                      tau=-data.tau)
    score = cita_symmetrized(model, data, flipped)
    announce(6, "label-flipped copy: symmetrized score 0, one-sided score > 0",
             score.normalized <= 1e-10 and score.one_sided_normalized > 0,
             f"symmetrized {score.normalized:.2e}, "
             f"one-sided {score.one_sided_normalized:.3f}")


def test_criterion_7_gradient_suite(announce):
    specs = [NetworkSpec(2, (2, 2), (2,)), NetworkSpec(3, (3,), (2,)),
             NetworkSpec(1, (2,), ()), NetworkSpec(2, (4,), (3,))]
    failures = 0
    for run in range(100):
        rng = np.random.default_rng(5000 + run)
        spec = specs[run % len(specs)]
        store = network.init_network(spec, run)
        for layer in store.layers:
            layer.b[:] = 0.1 * rng.standard_normal(layer.b.shape)
        x = rng.standard_normal((3, spec.input_dim))
        wy0 = rng.standard_normal(3)
        wy1 = rng.standard_normal(3)

        def loss():
            acts = network.forward(store, x)
            return float(wy0 @ acts.y0 + wy1 @ acts.y1)

        acts = network.forward(store, x)
        grads = network.backward(store, acts, wy0, wy1)
        try:
            assert_grads_match_fd(loss, store, grads)
        except AssertionError:
            failures += 1

    def fd(fn, arr, i, j, h=1e-6):
        ap = arr.copy(); ap[i, j] += h
        am = arr.copy(); am[i, j] -= h
        return (fn(ap) - fn(am)) / (2 * h)

    mmd_cfg = IpmConfig(kind="mmd_rbf", bandwidth=1.0)
    sink_cfg = IpmConfig(kind="sinkhorn", epsilon=0.05, max_iters=5000,
                         convergence_tol=1e-12)
    ipm_failures = 0
    for seed in range(10):
        rng = np.random.default_rng(8000 + seed)
        a = rng.standard_normal((5, 2))
        b = rng.standard_normal((4, 2)) + 0.8
        res = mmd_rbf(a, b, mmd_cfg, with_grad=True)
        for i in range(5):
            for j in range(2):
                want = fd(lambda x: mmd_rbf(x, b, mmd_cfg).value, a, i, j)
                if abs(res.grad_a[i, j] - want) > 1e-9 + 1e-4 * abs(want):
                    ipm_failures += 1
        res = sinkhorn_divergence(a, b, sink_cfg, with_grad=True)
        for i in range(5):
            for j in range(2):
                # larger step: solver truncation noise in the debiasing terms
                # swamps a 1e-6 central difference
                want = fd(lambda x: sinkhorn_divergence(x, b, sink_cfg).value,
                          a, i, j, h=1e-4)
                if abs(res.grad_a[i, j] - want) > 1e-7 + 1e-3 * abs(want):
                    ipm_failures += 1
    announce(7, "100 random networks and both distance estimators pass "
                "finite-difference checks",
             failures == 0 and ipm_failures == 0,
             f"{failures} network, {ipm_failures} estimator mismatches")


def test_criterion_8_fisher_oracle(announce):
    spec = NetworkSpec(2, (2,), (2,))  # 24 parameters
    worst = 0.0
    for seed in range(5):
        data = gen_source(30, DgpParams(d=2), seed)
        model = init_model(spec, seed)
        for order in ("identity", "swapped"):
            got = diag_fisher(model, data, order).values
            want = dense_fisher_oracle(model, data, order)
            worst = max(worst, float(np.max(np.abs(got - want))))
    announce(8, "diagonal Fisher matches per-example dense oracle within 1e-10",
             worst < 1e-10, f"worst abs error {worst:.2e}")


def test_criterion_9_sinkhorn_vs_sorted_wasserstein(announce):
    cfg = IpmConfig(kind="sinkhorn", epsilon=0.01, max_iters=20000,
                    convergence_tol=1e-12)
    hits = 0
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        a = rng.normal(0, 1, (8, 1))
        b = rng.normal(1, 1, (8, 1))
        w1 = float(np.mean(np.abs(np.sort(a[:, 0]) - np.sort(b[:, 0]))))
        err = abs(sinkhorn_divergence(a, b, cfg).value - w1)
        worst = max(worst, err)
        hits += err <= 0.05
    announce(9, "entropic divergence within 0.05 of exact 1-D Wasserstein "
                "on 50/50 seeds", hits == 50,
             f"{hits}/50, worst error {worst:.4f}")


def test_criterion_10_dgp_sanity(announce):
    big = gen_source(10000, DGP, 0)
    tau_ok = abs(big.tau.mean() - 1.0) < 0.05
    corr_ok = abs(np.corrcoef(big.t, big.y0)[0, 1]) < 0.05

    biased_hits = 0
    for seed in range(20):
        src = gen_source(2000, DGP, 100 + seed)
        tgt = subsample_biased(src, 250, 200 + seed)
        r = np.corrcoef(tgt.t, tgt.y0)[0, 1]
        dim = tgt.y[tgt.t == 1].mean() - tgt.y[tgt.t == 0].mean()
        biased_hits += (r > 0.1) and (dim > 1.0)
    announce(10, "randomized source is clean; biased targets are confounded "
                 "in >= 18/20 seeds",
             tau_ok and corr_ok and biased_hits >= 18,
             f"mean tau {big.tau.mean():.3f}, biased hits {biased_hits}/20")


def test_criterion_11_determinism_and_provenance(tmp_path, announce):
    cfg = ExperimentConfig(
        source_sizes=[300], target_sizes=[30],
        sampling=["random", "biased"], replications=2,
        spec=NetworkSpec(5, (8,), (4,)),
        source_train=TrainConfig(epochs=20, batch_size=32),
        target_train=TrainConfig(learning_rate=0.01, epochs=20, batch_size=8),
        transfer=TransferConfig(phase1=PhaseConfig(1e-4, 20, ipm=IpmConfig()),
                                phase2=PhaseConfig(1e-4, 20, batch_size=8),
                                source_ref_size=100),
        master_seed=13)
    tables = ("summary.csv", "figure_mean_ite.csv", "figure_pehe.csv")
    a, b = tmp_path / "a", tmp_path / "b"
    cmd_full_study(cfg, a)
    cmd_full_study(cfg, b)
    identical = all((a / t).read_bytes() == (b / t).read_bytes() for t in tables)
    same_manifest = ((a / "config.json").read_bytes()
                     == (b / "config.json").read_bytes())
    announce(11, "independent reruns reproduce every summary table "
                 "byte-identically", identical and same_manifest)


def test_csv_workflow_moves_target_toward_source(tmp_path, announce):
    """Synthetic observational CSVs: the transferred model's mean ITE must end
    closer to the source model's than a target-only baseline, in >= 8/10 runs.
    """
    schema = CsvSchema("treated", "score", [f"c{i}" for i in range(5)])
    sim = gen_source(2000, DGP, 21)
    src_csv = tmp_path / "source.csv"
    save_csv(Dataset(sim.X, sim.t, sim.y), src_csv, schema=schema)
    source = load_csv(src_csv, schema)
    src_model, _ = train_source(source, STUDY_CONFIG.spec,
                                TrainConfig(learning_rate=0.005, epochs=150,
                                            batch_size=32, seed=0))
    xfer_cfg = STUDY_CONFIG.transfer
    tgt_train = STUDY_CONFIG.target_train

    wins = 0
    for seed in range(10):
        raw = subsample_biased(sim, 60, 400 + seed)
        tgt_csv = tmp_path / f"target{seed}.csv"
        save_csv(Dataset(raw.X, raw.t, raw.y), tgt_csv, schema=schema)
        target = load_csv(tgt_csv, schema)

        src_ref = float(np.mean(predict_ite(src_model, target.X)))
        base_cfg = TrainConfig(learning_rate=tgt_train.learning_rate,
                               epochs=tgt_train.epochs,
                               batch_size=min(tgt_train.batch_size, target.n),
                               seed=seed)
        baseline, _ = train_source(target, NetworkSpec(5, (2,), ()), base_cfg)
        base_ite = float(np.mean(predict_ite(baseline, target.X)))

        cfg_d = xfer_cfg.to_dict()
        cfg_d["seed"] = seed
        moved, report = transfer_pipeline(src_model, source, target,
                                          TransferConfig.from_dict(cfg_d))
        post = report.mean_ite_post
        wins += abs(post - src_ref) < abs(base_ite - src_ref)
    announce("csv-workflow", "transfer pulls the target mean ITE toward the "
                             "source model in >= 8/10 runs",
             wins >= 8, f"{wins}/10")
