"""Command-line entry point: ``otvmc <subcommand> ...``.

Exit codes: 0 success / comparison passed, 1 comparison failed,
2 invalid input or unsupported request, 3 simulation run failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .compare import CompareError, run_compare
from .config import ConfigError, RunConfig
from .oracle import (CapacityError, UnsupportedRegimeError, closed_form_records,
                     dense_lindblad_evolve, dense_sse_ensemble)
from .results import write_records_csv
from .runner import RunFailedError, run_simulation

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_RUN = 0, 1, 2, 3


def _load(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    changes = {}
    for flag, key in (("seed", "master_seed"), ("trajectories", "n_trajectories"),
                      ("mode", "mode"), ("scheme", "scheme"), ("out", "output_dir")):
        v = getattr(args, flag, None)
        if v is not None:
            changes[key] = v
    return RunConfig.from_dict({**cfg.to_dict(), **changes}) if changes else cfg


def _record_times(cfg: RunConfig) -> np.ndarray:
    return np.array([s * cfg.dt for s in cfg.record_steps])


def cmd_simulate(args) -> int:
    cfg = _load(args)
    res = run_simulation(cfg, workers=args.workers, reuse_staged=not args.fresh)
    print(f"wrote {res.csv_path} ({res.n_failed} failed trajectories)")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _load(args)
    path = Path(cfg.output_dir) / "oracle.csv"
    write_records_csv(closed_form_records(cfg.model, _record_times(cfg)), path)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_exact_lindblad(args) -> int:
    cfg = _load(args)
    path = Path(cfg.output_dir) / "exact_lindblad.csv"
    recs = dense_lindblad_evolve(cfg.model, _record_times(cfg), max_step=min(cfg.dt, 1e-3))
    write_records_csv(recs, path)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_exact_sse(args) -> int:
    cfg = _load(args)
    ens = dense_sse_ensemble(cfg.model, cfg.n_trajectories, cfg.dt, cfg.n_steps,
                             cfg.record_stride, cfg.mode, cfg.master_seed, cfg.scheme)
    path = Path(cfg.output_dir) / f"exact_sse_{cfg.mode}.csv"
    write_records_csv(ens.records(cfg.model.N, cfg.mode), path)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    rep = run_compare(args.sim, args.ref, z_max=args.z_max, xi2_rel_tol=args.xi2_tol,
                      t_max=args.t_max)
    print(rep.to_text())
    if args.json:
        Path(args.json).write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
    return EXIT_OK if rep.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="otvmc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name, help, out_required=False):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", required=out_required, help="output directory")
        return sp

    sp = with_config("simulate", "variational trajectory ensemble")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--trajectories", type=int)
    sp.add_argument("--mode", choices=["nonlinear", "linear"])
    sp.add_argument("--scheme", choices=["midpoint", "trapezoidal"])
    sp.add_argument("--workers", type=int, help="process count (default: OTVMC_WORKERS or all cores)")
    sp.add_argument("--fresh", action="store_true", help="ignore staged trajectories")
    sp.set_defaults(func=cmd_simulate)

    with_config("oracle", "closed-form reference (h = 0)", True).set_defaults(func=cmd_oracle)
    with_config("exact-lindblad", "dense Lindblad reference (N <= 8)").set_defaults(
        func=cmd_exact_lindblad)
    sp = with_config("exact-sse", "dense SSE trajectories (N <= 12)")
    sp.add_argument("--trajectories", type=int, required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--mode", choices=["nonlinear", "linear"])
    sp.add_argument("--scheme", choices=["midpoint", "trapezoidal"])
    sp.set_defaults(func=cmd_exact_sse)

    sp = sub.add_parser("compare", help="compare a simulation CSV to a reference CSV")
    sp.add_argument("sim")
    sp.add_argument("ref")
    sp.add_argument("--z-max", type=float, default=3.0)
    sp.add_argument("--xi2-tol", type=float, default=0.10, help="relative tolerance on min xi2")
    sp.add_argument("--t-max", type=float)
    sp.add_argument("--json", help="also write the report as JSON")
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CompareError, CapacityError, UnsupportedRegimeError,
            FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except RunFailedError as err:
        print(f"run failed: {err}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
