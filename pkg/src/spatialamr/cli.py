"""``amr`` command line.

Subcommands: ``run`` (full pipeline), ``test`` (cumulative-effect test),
``summary`` (print a stored result table) and ``toy`` (bundled example).
Exit codes: 0 success, 2 validation error (including missing input files),
3 runtime or estimation error; errors are reported as a JSON object on
stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from .errors import AmrError, ValidationError
from .io import load_json
from .pipeline import (
    PipelineState,
    ResultTable,
    RunConfig,
    format_cumulative_report,
    format_summary,
    run_cumulative_test,
    run_pipeline,
    run_toy,
)

# flag dest -> RunConfig field
_RUN_FLAGS = {
    "zdata": "zdata_path", "raster": "raster_path", "ydata": "ydata_path",
    "x_coord_Z": "x_coord_Z", "y_coord_Z": "y_coord_Z", "treatment": "treatment",
    "x_coord_Y": "x_coord_Y", "y_coord_Y": "y_coord_Y", "outcome": "outcome",
    "dvec": "dvec", "dist": "dist_metric", "numpts": "numpts", "only_unique": "only_unique",
    "per_se": "per_se", "conley_se": "conley_se", "cutoff": "cutoff", "kernel": "kernel",
    "edf": "edf", "smooth": "smooth", "bandwidth": "bandwidth", "nperms": "nperms",
    "alpha": "alpha", "seed": "seed", "estimator": "estimator", "design": "design",
    "scheme": "scheme", "block_col": "block_col", "kriging": "kriging", "out": "out_dir",
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("inputs")
    g.add_argument("--config", help="JSON file of RunConfig fields; flags override it")
    g.add_argument("--zdata", help="CSV of intervention nodes")
    g.add_argument("--raster", help="Esri ASCII grid of outcomes")
    g.add_argument("--ydata", help="CSV of outcome points (kriged)")
    g.add_argument("--x-coord-Z", dest="x_coord_Z")
    g.add_argument("--y-coord-Z", dest="y_coord_Z")
    g.add_argument("--treatment")
    g.add_argument("--x-coord-Y", dest="x_coord_Y")
    g.add_argument("--y-coord-Y", dest="y_coord_Y")
    g.add_argument("--outcome", help="outcome column in Ydata, or in Zdata for the kriging fallback")
    g.add_argument("--block-col", dest="block_col")
    g.add_argument("--design", help="bernoulli:P or complete:N1 (default: complete with observed N1)")
    e = p.add_argument_group("estimation")
    e.add_argument("--dvec", help="FROM:TO:BY or a comma-separated list")
    e.add_argument("--dist", choices=["euclidean", "geodesic"])
    e.add_argument("--numpts", type=int)
    e.add_argument("--only-unique", dest="only_unique", action="store_true", default=None)
    e.add_argument("--estimator", choices=["hajek", "ht"])
    e.add_argument("--kriging", help="'auto' or RANGE,SILL,NUGGET")
    e.add_argument("--smooth", action="store_true", default=None)
    e.add_argument("--bandwidth", type=float)
    i = p.add_argument_group("inference")
    i.add_argument("--no-per", dest="per_se", action="store_false", default=None)
    i.add_argument("--no-conley", dest="conley_se", action="store_false", default=None)
    i.add_argument("--cutoff", type=float)
    i.add_argument("--kernel", choices=["uni", "uniform", "tri", "triangular", "epa", "epanechnikov"])
    i.add_argument("--edf", action="store_true", default=None)
    i.add_argument("--nperms", type=int)
    i.add_argument("--alpha", type=float)
    i.add_argument("--seed", type=int)
    i.add_argument("--scheme", choices=["complete", "bernoulli", "blocks", "clusters"])
    p.add_argument("--out", help="output directory (default amr_out)")


def config_from_args(args) -> RunConfig:
    doc = {}
    if getattr(args, "config", None):
        doc = load_json(args.config)
        if not isinstance(doc, dict):
            raise ValidationError(f"{args.config}: configuration must be a JSON object")
    for flag, name in _RUN_FLAGS.items():
        val = getattr(args, flag, None)
        if val is not None:
            doc[name] = val
    doc.setdefault("out_dir", "amr_out")
    return RunConfig.from_dict(doc)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="estimate the AMR curve with intervals")
    _add_run_flags(run)
    run.add_argument("--summary-range", nargs=2, type=float, metavar=("LO", "HI"))
    run.add_argument("--quiet", action="store_true")

    test = sub.add_parser("test", help="cumulative-effect permutation test")
    test.add_argument("--range", nargs=2, type=float, metavar=("LO", "HI"), required=True)
    test.add_argument("--from", dest="from_dir",
                      help="output directory of an earlier run (default amr_out)")
    _add_run_flags(test)

    summ = sub.add_parser("summary", help="print a stored result table")
    summ.add_argument("--range", nargs=2, type=float, metavar=("LO", "HI"))
    summ.add_argument("--from", dest="from_dir", default="amr_out")

    toy = sub.add_parser("toy", help="run the bundled four-node toy example")
    toy.add_argument("--out", default="amr_toy")
    toy.add_argument("--range", nargs=2, type=float, default=(0.1, 0.5), metavar=("LO", "HI"),
                     help="range for the cumulative test (default 0.1 0.5)")
    return parser


def _cmd_run(args) -> int:
    cfg = config_from_args(args)
    result, _ = run_pipeline(cfg)
    if not args.quiet:
        sys.stdout.write(format_summary(result, tuple(args.summary_range) if args.summary_range else None))
    return 0


def _cmd_test(args) -> int:
    if args.zdata or args.config:
        _, state = run_pipeline(config_from_args(args), write=False)
    else:
        state = PipelineState.from_json(Path(args.from_dir or "amr_out") / "state.json")
    res = run_cumulative_test(state, *args.range)
    sys.stdout.write(format_cumulative_report(res))
    return 0


def _cmd_summary(args) -> int:
    table = ResultTable.from_json(Path(args.from_dir) / "results.json")
    sys.stdout.write(format_summary(table, tuple(args.range) if args.range else None))
    return 0


def _cmd_toy(args) -> int:
    result, state, _ = run_toy(args.out)
    sys.stdout.write(format_summary(result, (0.1, 1.0)))
    sys.stdout.write("\n")
    sys.stdout.write(format_cumulative_report(run_cumulative_test(state, *args.range)))
    return 0


_COMMANDS = {"run": _cmd_run, "test": _cmd_test, "summary": _cmd_summary, "toy": _cmd_toy}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return _COMMANDS[args.command](args)
    except AmrError as exc:
        code = exc.exit_code
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    except FileNotFoundError as exc:
        code = 2
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    except (OSError, KeyError) as exc:
        code = 3
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(err) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
