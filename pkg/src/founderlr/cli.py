"""``founderlr`` command line: analyze, bounds, validate.

Exit status 0 on success, 2 on bad input, 3 when a computation breaks down.
"""

from __future__ import annotations

import argparse
import sys
import warnings

from . import __version__
from .analysis import RunConfig, run_analysis, run_bounds
from .errors import InputError, NumericalError
from .io import DEFAULT_FLOOR, check_case_alleles, load_case, load_frequency_db, missing_alleles
from .report import render_analysis, render_bounds
from .sensitivity import BOUND_MODES, EPS_MODES

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


def _common(p: argparse.ArgumentParser, need_population: bool = True) -> None:
    p.add_argument("--case", required=True, help="JSON case file")
    p.add_argument("--freq", required=True, help="CSV allele frequency database")
    p.add_argument("--population", required=need_population, help="gene pool for non-HET scenarios")
    p.add_argument("--marker", action="append", default=[], dest="markers",
                   help="restrict to this marker (repeatable; default all markers of the case)")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict", action="store_true", default=True,
                      help="reject evidence alleles missing from the DB (default)")
    mode.add_argument("--lenient", dest="strict", action="store_false",
                      help="give missing evidence alleles the floor frequency, with a warning")
    p.add_argument("--floor", type=float, default=DEFAULT_FLOOR, help="missing-allele floor (lenient mode)")
    p.add_argument("--no-coarsen", dest="coarsen", action="store_false",
                   help="keep every DB allele instead of observed alleles plus 'other'")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--output", "-o", help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="founderlr", description=(
        "Likelihood ratios for forensic DNA cases under alternative founder-gene models."))
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="per-marker and overall LRs for one or more scenarios")
    _common(a)
    a.add_argument("--scenario", action="append", default=[], dest="scenarios",
                   help="scenario label or kind from the case file, kind[:value] (e.g. uaf:100), "
                        "or inline JSON; repeatable; default the case file's list")
    a.add_argument("--prior", type=float, help="prior probability of the first hypothesis, for a posterior row")
    a.add_argument("--jobs", type=int, default=1, help="markers analysed concurrently")

    b = sub.add_parser("bounds", help="sensitivity bounds for the UAF or IBD scenario")
    _common(b)
    b.add_argument("--scenario", required=True,
                   help="uaf or ibd (or a label, kind[:value] or JSON config of one of them)")
    b.add_argument("--eps-mode", action="append", choices=EPS_MODES, dest="eps_modes",
                   help=f"neighbourhood norm (repeatable; default {' '.join(BOUND_MODES)})")
    b.add_argument("--epsilon", type=float, help="override every radius (default: distance of the scenario joint)")

    v = sub.add_parser("validate", help="check a case file and/or frequency DB")
    v.add_argument("--case", help="JSON case file")
    v.add_argument("--freq", help="CSV allele frequency database")
    v.add_argument("--population", action="append", default=[], dest="populations",
                   help="populations to check the case's alleles against (default all)")
    v.add_argument("--lenient", action="store_true", help="report missing alleles without failing")
    return parser


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _warn(notes) -> None:
    for n in notes:
        print(f"founderlr: warning: {n}", file=sys.stderr)


def _config(args, **extra) -> RunConfig:
    return RunConfig(population=args.population, markers=args.markers, strict=args.strict,
                     floor=args.floor, coarsen=args.coarsen, **extra)


def _analyze(args) -> int:
    if args.prior is not None and not 0 < args.prior < 1:
        raise InputError("--prior must lie strictly between 0 and 1")
    if args.jobs < 1:
        raise InputError("--jobs must be at least 1")
    db = load_frequency_db(args.freq)
    case = load_case(args.case)
    report = run_analysis(case, db, _config(args, scenarios=args.scenarios, prior=args.prior, jobs=args.jobs))
    _warn(report.warnings)
    _emit(render_analysis(report, args.format), args.output)
    return EXIT_OK


def _bounds(args) -> int:
    db = load_frequency_db(args.freq)
    case = load_case(args.case)
    modes = tuple(dict.fromkeys(args.eps_modes or BOUND_MODES))
    report = run_bounds(case, db, _config(args, scenarios=[args.scenario], eps_modes=modes,
                                          epsilon=args.epsilon))
    _warn(report.warnings)
    _emit(render_bounds(report, args.format), args.output)
    return EXIT_OK


def _validate(args) -> int:
    if not args.case and not args.freq:
        raise InputError("validate needs --case and/or --freq")
    db = load_frequency_db(args.freq) if args.freq else None
    if db is not None:
        print(f"frequency DB {args.freq}: {len(db.populations)} populations, {len(db.markers())} markers")
    if args.case:
        case = load_case(args.case)
        print(f"case {args.case}: {case.topology}, {len(case.markers)} markers, "
              f"{len(case.scenarios)} scenarios")
        if db is not None:
            pops = args.populations or None
            missing = missing_alleles(case, db, pops)
            for p, m, a in missing:
                print(f"missing: {p} {m} " + ("(no table)" if a is None else f"allele {a}"))
            if not args.lenient:
                check_case_alleles(case, db, pops, strict=True)
    print("ok")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"analyze": _analyze, "bounds": _bounds, "validate": _validate}[args.command]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return handler(args)
    except InputError as exc:
        print(f"founderlr: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"founderlr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
