"""Command-line entry point: ``tensorstep {run,sweep,stability,io}``.

Exit codes: 0 success, 2 invalid configuration or input file, 3 runtime
failure (partial CSV output is kept).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .dense import DenseBudgetError
from .harness.config import ConfigError, load_config
from .harness.runner import ExperimentFailure, build_problem, run_experiment
from .harness.stability import stability_compare
from .harness.sweep import SweepAborted, convergence_sweep
from .harness.tensor_io import TensorFormatError, load_tt, save_tt
from .tt import tt_norm

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("tensorstep")


def _dt_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of step sizes: {text!r}") from None


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tensorstep", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="integrate one configuration")
    run.add_argument("--config", required=True)

    sweep = sub.add_parser("sweep", help="final-time error versus dt, with fitted order")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--dt", required=True, type=_dt_list, help="comma-separated step sizes")
    sweep.add_argument("--out", default=None, help="directory for per-run and summary CSVs")
    sweep.add_argument("--workers", type=int, default=1)

    stab = sub.add_parser("stability", help="explicit versus implicit at the same dt")
    stab.add_argument("--config-explicit", required=True)
    stab.add_argument("--config-implicit", required=True)

    io = sub.add_parser("io", help="write or inspect TTCK1 checkpoints")
    io.add_argument("action", choices=("save", "load"))
    io.add_argument("path")
    io.add_argument("--config", help="save: checkpoint this problem's initial state")
    return p


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, default=float))


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    rec = run_experiment(cfg)
    last = rec.table[-1]
    _emit({"steps": len(rec.table), "t_final": last["t"], "l2_error": last["l2_error"],
           "max_rank": max(r["max_rank"] for r in rec.table), "stopped_early": rec.stopped_early,
           "wall_total_s": rec.metadata["wall_total_s"], "csv": cfg.output_csv})
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    try:
        res = convergence_sweep(cfg, args.dt, out_dir=args.out, workers=args.workers)
    except ValueError as exc:
        raise ConfigError("dt", str(exc)) from None
    _emit({"rows": res.rows, "slope": res.slope, "intercept": res.intercept})
    return EXIT_OK


def _cmd_stability(args) -> int:
    verdict = stability_compare(load_config(args.config_explicit), load_config(args.config_implicit))
    _emit(verdict.as_dict())
    return EXIT_OK


def _cmd_io(args) -> int:
    if args.action == "save":
        if not args.config:
            raise ConfigError("config", "io save needs --config to pick the tensor")
        f = build_problem(load_config(args.config)).f0
        save_tt(args.path, f)
    else:
        f = load_tt(args.path)
    _emit({"path": args.path, "d": f.d, "shape": list(f.shape), "ranks": list(f.ranks),
           "field": "complex128" if f.is_complex else "float64", "norm": tt_norm(f)})
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "stability": _cmd_stability, "io": _cmd_io}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TensorFormatError, FileNotFoundError) as exc:
        print(f"bad input file: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ExperimentFailure, SweepAborted, DenseBudgetError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
