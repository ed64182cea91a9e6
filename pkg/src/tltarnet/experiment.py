"""Study harness: scenario grid execution, seed management, persistence,
and summary emission.

Seed scheme: every random draw uses a seed derived from the master seed and
a fixed integer path (role, source size, replication, target size), via
numpy SeedSequence.  Execution order and parallelism therefore cannot change
any result.
"""

import csv
import hashlib
import json

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cita import cita_symmetrized
from .data import DgpParams, gen_source, save_csv, subsample_biased, subsample_random, write_sidecar
from .errors import DataError
from .metrics import SUMMARY_COLUMNS, ReplicationResult, mean_ite, pehe, summarize
from .model import TrainConfig, predict_ite, train_source
from .network import NetworkSpec, load_checkpoint, parameter_count, save_checkpoint
from .transfer import TransferConfig, transfer_pipeline

# seed-path role tags
ROLE_SOURCE = 1
ROLE_TARGET_RANDOM = 2
ROLE_TARGET_BIASED = 3
ROLE_TRAIN_SOURCE = 4
ROLE_TRAIN_TARGET = 5
ROLE_TRANSFER = 6

SAMPLING_ROLES = {"random": ROLE_TARGET_RANDOM, "biased": ROLE_TARGET_BIASED}


def derive_seed(master, *path):
    """Deterministic child seed for an integer path under the master seed."""
    return int(np.random.SeedSequence([int(master)] + [int(p) for p in path])
               .generate_state(1)[0])


def default_target_spec(n_target, input_dim):
    """Smallest-ladder architecture with roughly n_target/10 parameters for
    the target-only baseline."""
    ladder = [
        NetworkSpec(input_dim, (2,), ()),
        NetworkSpec(input_dim, (4,), ()),
        NetworkSpec(input_dim, (8,), ()),
        NetworkSpec(input_dim, (8, 8), (4,)),
    ]
    budget = max(n_target / 10.0, parameter_count(ladder[0]))
    chosen = ladder[0]
    for spec in ladder:
        if parameter_count(spec) <= budget:
            chosen = spec
    return chosen


@dataclass
class ExperimentConfig:
    dgp: DgpParams = field(default_factory=DgpParams)
    source_sizes: list = field(default_factory=lambda: [5000])
    target_sizes: list = field(default_factory=lambda: [50, 100])
    sampling: list = field(default_factory=lambda: ["random", "biased"])
    replications: int = 10
    spec: NetworkSpec = field(default_factory=lambda: NetworkSpec(5, (16, 16, 16), (8, 8)))
    source_train: TrainConfig = field(default_factory=TrainConfig)
    target_train: TrainConfig = field(
        default_factory=lambda: TrainConfig(learning_rate=0.005, epochs=600, batch_size=100))
    transfer: TransferConfig = field(default_factory=TransferConfig)
    target_specs: dict = field(default_factory=dict)  # n_target -> NetworkSpec override
    master_seed: int = 0
    exclude_small_source_large_target: bool = True  # drop the (1000, 500) cell
    compute_cita: bool = True

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if any(s < 2 for s in self.source_sizes) or any(s < 2 for s in self.target_sizes):
            raise ValueError("all dataset sizes must be >= 2")
        bad = [s for s in self.sampling if s not in SAMPLING_ROLES]
        if bad:
            raise ValueError(f"unknown sampling regimes {bad}")

    def cells(self, n_source):
        """(n_target, sampling) pairs for one source size, after exclusion."""
        out = []
        for n_t in self.target_sizes:
            if (self.exclude_small_source_large_target
                    and n_source == 1000 and n_t == 500):
                continue
            if n_t > n_source:
                continue
            for s in self.sampling:
                out.append((n_t, s))
        return out

    def target_spec(self, n_target):
        if n_target in self.target_specs:
            return self.target_specs[n_target]
        return default_target_spec(n_target, self.dgp.d)

    def to_dict(self):
        return {
            "dgp": self.dgp.to_dict(),
            "source_sizes": list(self.source_sizes),
            "target_sizes": list(self.target_sizes),
            "sampling": list(self.sampling),
            "replications": self.replications,
            "spec": self.spec.to_dict(),
            "source_train": self.source_train.to_dict(),
            "target_train": self.target_train.to_dict(),
            "transfer": self.transfer.to_dict(),
            "target_specs": {str(k): v.to_dict() for k, v in self.target_specs.items()},
            "master_seed": self.master_seed,
            "exclude_small_source_large_target": self.exclude_small_source_large_target,
            "compute_cita": self.compute_cita,
        }

    @classmethod
    def from_dict(cls, d):
        kw = dict(d)
        if "dgp" in kw:
            kw["dgp"] = DgpParams.from_dict(kw["dgp"])
        if "spec" in kw:
            kw["spec"] = NetworkSpec.from_dict(kw["spec"])
        if "source_train" in kw:
            kw["source_train"] = TrainConfig.from_dict(kw["source_train"])
        if "target_train" in kw:
            kw["target_train"] = TrainConfig.from_dict(kw["target_train"])
        if "transfer" in kw:
            kw["transfer"] = TransferConfig.from_dict(kw["transfer"])
        if "target_specs" in kw:
            kw["target_specs"] = {int(k): NetworkSpec.from_dict(v)
                                  for k, v in kw["target_specs"].items()}
        return cls(**kw)

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path):
    with open(path, encoding="utf-8") as f:
        return ExperimentConfig.from_dict(json.load(f))


def _make_target(config, source, n_source, rep, n_target, sampling):
    seed = derive_seed(config.master_seed, SAMPLING_ROLES[sampling],
                       n_source, rep, n_target)
    if sampling == "random":
        return subsample_random(source, n_target, seed)
    return subsample_biased(source, n_target, seed)


def _seeded(cfg_train, seed):
    d = cfg_train.to_dict()
    d["seed"] = seed
    return TrainConfig.from_dict(d)


def run_replication(config, n_source, rep, checkpoint_path=None):
    """One replication: generate, train the source model, run both methods
    on every target cell.  Returns (result rows, source model)."""
    source = gen_source(n_source, config.dgp,
                        derive_seed(config.master_seed, ROLE_SOURCE, n_source, rep))
    src_cfg = _seeded(config.source_train,
                      derive_seed(config.master_seed, ROLE_TRAIN_SOURCE, n_source, rep))
    src_model, _ = train_source(source, config.spec, src_cfg)
    if checkpoint_path is not None:
        save_checkpoint(src_model.store, src_model.spec, checkpoint_path)

    rows = []
    for n_target, sampling in config.cells(n_source):
        target = _make_target(config, source, n_source, rep, n_target, sampling)
        cita_val = None
        if config.compute_cita:
            cita_val = cita_symmetrized(src_model, source, target).normalized

        tgt_cfg = _seeded(config.target_train,
                          derive_seed(config.master_seed, ROLE_TRAIN_TARGET,
                                      n_source, rep, n_target))
        tgt_cfg.batch_size = min(tgt_cfg.batch_size, n_target)
        plain, _ = train_source(target, config.target_spec(n_target), tgt_cfg)
        plain_ite = predict_ite(plain, target.X)

        tl_cfg_d = config.transfer.to_dict()
        tl_cfg_d["seed"] = derive_seed(config.master_seed, ROLE_TRANSFER,
                                       n_source, rep, n_target)
        tl_model, _ = transfer_pipeline(src_model, source, target,
                                        TransferConfig.from_dict(tl_cfg_d))
        tl_ite = predict_ite(tl_model, target.X)

        for method, ite in (("tarnet", plain_ite), ("tl-tarnet", tl_ite)):
            rows.append(ReplicationResult(
                n_source=n_source, n_target=n_target, sampling=sampling,
                method=method, seed=rep, mean_ite=mean_ite(ite),
                pehe_sq=pehe(ite, target.tau), cita=cita_val))
    return rows, src_model


def _rows_to_json(rows):
    return [{"n_source": r.n_source, "n_target": r.n_target, "sampling": r.sampling,
             "method": r.method, "seed": r.seed, "mean_ite": r.mean_ite,
             "pehe_sq": r.pehe_sq, "cita": r.cita} for r in rows]


def _rows_from_json(data):
    return [ReplicationResult(**d) for d in data]


def _replication_job(args):
    config_dict, n_source, rep, out_dir = args
    config = ExperimentConfig.from_dict(config_dict)
    out = Path(out_dir)
    ckpt = out / "checkpoints" / f"source_ns{n_source}_rep{rep}.json"
    rows, _ = run_replication(config, n_source, rep, checkpoint_path=ckpt)
    res_path = out / "results" / f"ns{n_source}_rep{rep}.json"
    tmp = res_path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(_rows_to_json(rows), f, sort_keys=True)
    tmp.rename(res_path)
    return str(res_path)


def cmd_simulate(config, out_dir):
    """Generate and persist every dataset in the grid as CSV + sidecar."""
    out = Path(out_dir)
    data_dir = out / "datasets"
    data_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for n_source in config.source_sizes:
        for rep in range(config.replications):
            seed = derive_seed(config.master_seed, ROLE_SOURCE, n_source, rep)
            source = gen_source(n_source, config.dgp, seed)
            p = data_dir / f"source_ns{n_source}_rep{rep}.csv"
            save_csv(source, p)
            write_sidecar(p, config.dgp, seed, "source")
            paths.append(str(p))
            for n_target, sampling in config.cells(n_source):
                target = _make_target(config, source, n_source, rep, n_target, sampling)
                tp = data_dir / f"target_ns{n_source}_nt{n_target}_{sampling}_rep{rep}.csv"
                save_csv(target, tp)
                write_sidecar(tp, config.dgp,
                              derive_seed(config.master_seed, SAMPLING_ROLES[sampling],
                                          n_source, rep, n_target),
                              f"target-{sampling}")
                paths.append(str(tp))
    _write_manifest(config, out, dataset_paths=paths)
    return paths


def _write_manifest(config, out_dir, **extra):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.json"
    manifest = {}
    if manifest_path.exists():
        with open(manifest_path, encoding="utf-8") as f:
            manifest = json.load(f)
    manifest.update({
        "config_hash": config.config_hash(),
        "tool_version": __version__,
        "master_seed": config.master_seed,
        "replication_seeds": {
            f"ns{ns}_rep{r}": derive_seed(config.master_seed, ROLE_SOURCE, ns, r)
            for ns in config.source_sizes for r in range(config.replications)},
    })
    manifest.update(extra)
    with open(out / "config.json", "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, sort_keys=True, indent=1)
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
    return manifest


def cmd_full_study(config, out_dir, workers=1, resume=False):
    """simulate -> train sources -> both methods per target -> evaluate.

    One results file per (source size, replication); with resume=True,
    existing result files are trusted and their cells skipped.
    """
    out = Path(out_dir)
    (out / "results").mkdir(parents=True, exist_ok=True)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)

    jobs = []
    errors = []
    for n_source in config.source_sizes:
        for rep in range(config.replications):
            res_path = out / "results" / f"ns{n_source}_rep{rep}.json"
            if resume and res_path.exists():
                continue
            jobs.append((config.to_dict(), n_source, rep, str(out)))

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for job, res in zip(jobs, ex.map(_replication_job, jobs)):
                pass
    else:
        for job in jobs:
            try:
                _replication_job(job)
            except Exception as e:  # record and move on; evaluate reports gaps
                errors.append({"n_source": job[1], "rep": job[2], "error": str(e)})

    _write_manifest(config, out, errors=errors)
    if errors:
        return [], errors
    summaries = cmd_evaluate(config, out)
    return summaries, errors


def collect_results(config, out_dir):
    """Load all replication rows; raise listing missing result files."""
    out = Path(out_dir)
    rows = []
    missing = []
    for n_source in config.source_sizes:
        for rep in range(config.replications):
            p = out / "results" / f"ns{n_source}_rep{rep}.json"
            if not p.exists():
                missing.append(str(p))
                continue
            with open(p, encoding="utf-8") as f:
                rows.extend(_rows_from_json(json.load(f)))
    if not rows:
        raise DataError(f"no runs found under {out}")
    if missing:
        raise DataError("missing/partial runs: " + ", ".join(missing))
    return rows


def cmd_evaluate(config, out_dir):
    """Summary CSV plus long-format per-figure tables."""
    rows = collect_results(config, out_dir)
    summaries = summarize(rows, config.dgp.beta)
    out = Path(out_dir)

    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        for s in summaries:
            w.writerow({k: _fmt(v) for k, v in s.row().items()})

    for name, value_of in (("figure_mean_ite.csv", lambda s: s.mean_ite),
                           ("figure_pehe.csv", lambda s: s.pehe_sq_mean)):
        with open(out / name, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["n_source", "n_target", "sampling", "method", "value"])
            for s in summaries:
                w.writerow([s.n_source, s.n_target, s.sampling, s.method,
                            _fmt(value_of(s))])
    return summaries


def _fmt(v):
    return repr(v) if isinstance(v, float) else v
