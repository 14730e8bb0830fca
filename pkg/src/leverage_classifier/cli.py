"""Command-line entry point: ``leverage-classifier {simulate,timing,real,project,synth-casp}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .datagen import casp_like, write_dataset_csv
from .harness import ExperimentConfig


def _common(p, real=False):
    p.add_argument("--config", help="key = value experiment file; flags override it")
    if real:
        p.add_argument("--input", required=False, help="labeled CSV file")
        p.add_argument("--label-col", dest="label_col")
        p.add_argument("--threshold", type=float)
    else:
        p.add_argument("--scenario", help="ImUniform, NormMix, T3 or T3Mix (or I..IV)")
        p.add_argument("--input", help="labeled CSV instead of a scenario")
        p.add_argument("--label-col", dest="label_col")
        p.add_argument("--threshold", type=float)
        p.add_argument("--N", type=int)
        p.add_argument("--p", type=int)
    p.add_argument("--n0", type=int)
    p.add_argument("--n", dest="n_list", help="comma-separated subsample sizes")
    p.add_argument("--reps", type=int)
    p.add_argument("--criterion", dest="criteria", help="comma-separated: A, L, UNIF, FULL")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    ap = argparse.ArgumentParser(prog="leverage-classifier",
                                 description="Optimal subsampling for weighted linear SVM.")
    sub = ap.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("simulate", help="Monte-Carlo comparison on a simulated scenario"))
    t = sub.add_parser("timing", help="CPU time of full-sample vs subsampled fits")
    _common(t)
    t.add_argument("--N-list", dest="N_list", help="comma-separated full-sample sizes")
    t.add_argument("--repeats", dest="timing_repeats", type=int)
    _common(sub.add_parser("real", help="comparison on a labeled CSV file"), real=True)
    pr = sub.add_parser("project", help="principal-component scores and decision values")
    _common(pr)
    pr.add_argument("--file", dest="proj_file", help="output CSV (default <out>/projection.csv)")
    sc = sub.add_parser("synth-casp", help="write a synthetic file with the CASP schema")
    sc.add_argument("--out", required=True)
    sc.add_argument("--seed", type=int, default=0)
    return ap


_CONFIG_KEYS = ("scenario", "input", "label_col", "threshold", "N", "p", "n0", "n_list", "reps",
                "criteria", "seed", "workers", "out", "N_list", "timing_repeats")


def _config(args) -> ExperimentConfig:
    over = {k: getattr(args, k) for k in _CONFIG_KEYS if getattr(args, k, None) is not None}
    if args.command == "real":
        over.setdefault("scenario", None)
    if args.config:
        return ExperimentConfig.from_file(args.config, **over)
    return ExperimentConfig(**over)


def _print_table(header, rows, stream=None):
    stream = sys.stdout if stream is None else stream
    print(",".join(header), file=stream)
    for r in rows:
        print(",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in r), file=stream)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth-casp":
            header, rows = casp_like(args.seed)
            write_dataset_csv(args.out, header, rows)
            print(f"wrote {len(rows)} rows to {args.out}")
            return 0
        cfg = _config(args)
        if args.command in ("simulate", "real"):
            if args.command == "real" and not cfg.input:
                raise ValueError("real needs --input")
            res = harness.run_simulation(cfg)
            _print_table(harness.SUMMARY_COLUMNS, harness.summarize(res))
            failed = sum(not r.ok for r in res)
            if failed:
                print(f"{failed} cells failed; see error_code in results.csv", file=sys.stderr)
        elif args.command == "timing":
            table = harness.run_timing(cfg)
            _print_table(harness.TIMING_COLUMNS, table.rows)
            for k, v in table.checks.items():
                print(f"{k}: {v}")
        elif args.command == "project":
            _project(cfg, args.proj_file)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def _project(cfg: ExperimentConfig, path):
    from .pipeline import leverage_fit, pilot_fit
    from .rng import derive_seed

    train, _ = harness.prepare_data(cfg)
    out = Path(cfg.out or ".")
    beta_hat, _, _ = harness.full_reference(train, cfg, out / ".cache")
    betas = {"FULL": beta_hat}
    pilot = pilot_fit(train, cfg.n0, derive_seed(cfg.seed, 2, 0), cfg.grid_for(cfg.n0))
    n = cfg.n_list[0]
    for j, crit in enumerate(c for c in cfg.criteria if c != "FULL"):
        fit = leverage_fit(train, pilot, crit, n, derive_seed(cfg.seed, 3, 0, 0, j),
                           cfg.grid_for(n + cfg.n0),
                           delta=cfg.delta_scale / train.N)
        betas[f"LC-{crit}"] = fit.beta
    path = Path(path) if path else out / "projection.csv"
    harness.emit_projection(train, betas, path)
    print(f"wrote {train.N} rows to {path}")


if __name__ == "__main__":
    sys.exit(main())
