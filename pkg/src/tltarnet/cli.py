"""Command-line harness.

Subcommands: simulate, train-source, transfer, cita, evaluate, full-study.
Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

import argparse
import csv
import json
import sys

from pathlib import Path

import numpy as np

from . import __version__
from .cita import cita_symmetrized
from .data import CsvSchema, load_csv
from .errors import CheckpointError, DataError, NumericalError
from .experiment import (ExperimentConfig, cmd_evaluate, cmd_full_study, cmd_simulate,
                         load_config)
from .model import TarnetModel, predict_ite, train_source
from .network import load_checkpoint, save_checkpoint
from .transfer import transfer_pipeline


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _schema_from_args(args, csv_path):
    if args.covariates:
        cov = args.covariates.split(",")
    else:
        try:
            with open(csv_path, newline="", encoding="utf-8") as f:
                header = next(csv.reader(f), None)
        except OSError as e:
            raise DataError(f"cannot read {csv_path}: {e}") from e
        if header is None:
            raise DataError(f"{csv_path}: empty file")
        cov = [c for c in header if c not in (args.treatment, args.outcome,
                                              "y0", "y1", "tau")]
    if not cov:
        raise DataError(f"{csv_path}: no covariate columns found")
    return CsvSchema(args.treatment, args.outcome, cov)


def _add_schema_flags(p):
    p.add_argument("--treatment", default="t", help="treatment column name")
    p.add_argument("--outcome", default="y", help="outcome column name")
    p.add_argument("--covariates", default="",
                   help="comma-separated covariate columns (default: all others)")


def _load_cfg(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.master_seed = args.seed
    return cfg


def _write_history(history, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=["epoch", "factual", "ipm", "total",
                                          "skipped_batches"])
        w.writeheader()
        for row in history.rows():
            w.writerow(row)


def main(argv=None):
    parser = _Parser(prog="tltarnet")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate the simulation grid datasets")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("train-source", help="train a source model on a CSV dataset")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--csv", required=True, help="dataset CSV")
    p.add_argument("--out", required=True, help="output directory")
    _add_schema_flags(p)

    p = sub.add_parser("transfer", help="transfer a source checkpoint to a target CSV")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--checkpoint", required=True, help="source model checkpoint")
    p.add_argument("--source-csv", required=True)
    p.add_argument("--target-csv", required=True)
    p.add_argument("--out", required=True)
    _add_schema_flags(p)

    p = sub.add_parser("cita", help="task-affinity scores of targets against a source")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--source-csv", required=True)
    p.add_argument("targets", nargs="+", help="target CSV files")
    p.add_argument("--out", default="-", help="output CSV path, - for stdout")
    _add_schema_flags(p)

    p = sub.add_parser("evaluate", help="summarize a completed run directory")
    p.add_argument("--config", help="experiment config JSON (default: <out>/config.json)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="run directory")

    p = sub.add_parser("full-study", help="end-to-end simulation study")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--resume", action="store_true")

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (DataError, CheckpointError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


def _dispatch(args):
    if args.command == "simulate":
        paths = cmd_simulate(_load_cfg(args), args.out)
        print(f"wrote {len(paths)} dataset files under {args.out}")
        return 0

    if args.command == "train-source":
        cfg = _load_cfg(args)
        data = load_csv(args.csv, _schema_from_args(args, args.csv))
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        model, hist = train_source(data, cfg.spec, cfg.source_train)
        save_checkpoint(model.store, model.spec, out / "source_model.json")
        _write_history(hist, out / "history.csv")
        final = hist.factual[-1] if hist.factual else float("nan")
        print(f"trained on {data.n} rows; final factual loss {final:.6g}; "
              f"checkpoint {out / 'source_model.json'}")
        return 0

    if args.command == "transfer":
        cfg = _load_cfg(args)
        store, spec = load_checkpoint(args.checkpoint)
        src_model = TarnetModel(spec, store)
        schema = _schema_from_args(args, args.source_csv)
        source = load_csv(args.source_csv, schema)
        target = load_csv(args.target_csv, schema)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        model, report = transfer_pipeline(src_model, source, target, cfg.transfer)
        save_checkpoint(model.store, model.spec, out / "transferred_model.json")
        with open(out / "transfer_report.json", "w", encoding="utf-8") as f:
            json.dump({"mean_ite_pre": report.mean_ite_pre,
                       "mean_ite_post": report.mean_ite_post,
                       "final_ipms": report.final_ipms,
                       "phase1_final": report.phase1_trace[-1] if report.phase1_trace else None,
                       "phase2_final": report.phase2_trace[-1] if report.phase2_trace else None},
                      f, sort_keys=True, indent=1)
        print(f"mean target ITE: {report.mean_ite_pre:.4f} (pre) -> "
              f"{report.mean_ite_post:.4f} (post)")
        return 0

    if args.command == "cita":
        store, spec = load_checkpoint(args.checkpoint)
        model = TarnetModel(spec, store)
        schema = _schema_from_args(args, args.source_csv)
        source = load_csv(args.source_csv, schema)
        rows = []
        for tpath in args.targets:
            score = cita_symmetrized(model, source, load_csv(tpath, schema))
            rows.append({"source": args.checkpoint, "target": tpath,
                         "raw": score.raw, "normalized": score.normalized,
                         "permutation": score.permutation,
                         "n_source": source.n,
                         "n_target": load_csv(tpath, schema).n})
        cols = ["source", "target", "raw", "normalized", "permutation",
                "n_source", "n_target"]
        out = sys.stdout if args.out == "-" else open(args.out, "w", newline="",
                                                      encoding="utf-8")
        try:
            w = csv.DictWriter(out, fieldnames=cols)
            w.writeheader()
            w.writerows(rows)
        finally:
            if out is not sys.stdout:
                out.close()
        return 0

    if args.command == "evaluate":
        cfg_path = args.config or str(Path(args.out) / "config.json")
        cfg = load_config(cfg_path)
        summaries = cmd_evaluate(cfg, args.out)
        print(f"wrote summary for {len(summaries)} scenario rows to "
              f"{Path(args.out) / 'summary.csv'}")
        return 0

    if args.command == "full-study":
        cfg = _load_cfg(args)
        summaries, errors = cmd_full_study(cfg, args.out, workers=args.workers,
                                           resume=args.resume)
        print(f"completed study: {len(summaries)} scenario rows, "
              f"{len(errors)} failed replications")
        return 3 if errors else 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
