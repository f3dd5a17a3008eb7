"""Command-line interface.

Every report carries a ``config`` block holding the resolved settings and an
``argv`` list; running that argv again reproduces the report byte for byte.
Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import bench
from . import procedures as proc
from . import statistics as st
from .calibration import DEFAULT_B, NullCache
from .errors import InvalidInputError, NumericalError
from .groups import SymmetryGroup
from .ingest import exchangeability_report, jitter, load_sample_csv, prices_to_returns, read_price_csv
from .reference import (GENERATORS, center_outward_grid, default_symmetry_grid, make_grid,
                        read_grid_csv, write_grid_csv)

log = logging.getLogger("otranks")

EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _common(p: argparse.ArgumentParser, *, mc=True, kernel=False, score=False, group=False,
            reference=True, calibration=None):
    if group:
        p.add_argument("--group", required=True,
                       help="trivial, central, sign, spherical, permutation, zonal[:axis], reflection:u")
    if reference:
        p.add_argument("--reference", default=None,
                       help=f"grid generator ({', '.join(GENERATORS)}) or a CSV file of grid points")
    if score:
        p.add_argument("--score", default="identity", choices=["identity", "normal_cdf"])
    if kernel:
        p.add_argument("--kernel", default="gaussian", choices=["gaussian", "laplace", "distance"])
        p.add_argument("--sigma", type=float, default=None,
                       help="kernel bandwidth (default 1/(4p)); exponent for the distance kernel")
    if calibration:
        p.add_argument("--calibration", default=calibration[0], choices=calibration)
    if mc:
        p.add_argument("--B", type=int, default=DEFAULT_B, help="Monte Carlo null replicates")
        p.add_argument("--no-cache", action="store_true", help="do not read or write the null cache")
    p.add_argument("--seed", type=int, default=None, help="master seed (drawn from entropy if absent)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--jitter", type=float, default=None, metavar="EPS",
                   help="break ties with Uniform(-EPS, EPS) noise")
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--format", default="json", choices=["json", "csv"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otranks", description="Optimal-transport rank tests")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ranksum", help="two-sample multivariate Wilcoxon rank-sum test")
    p.add_argument("x"), p.add_argument("y")
    _common(p, score=True, calibration=["mc", "asymptotic"])

    p = sub.add_parser("rank-mmd", help="two-sample rank-kernel MMD test")
    p.add_argument("x"), p.add_argument("y")
    _common(p, score=True, kernel=True)

    p = sub.add_parser("signedrank", help="one-sample generalised Wilcoxon signed-rank test")
    p.add_argument("x")
    _common(p, score=True, group=True, calibration=["mc", "asymptotic"])

    p = sub.add_parser("symmetry-mmd", help="OT-MMD test of symmetry under a group")
    p.add_argument("x")
    p.add_argument("--recentered", action="store_true",
                   help="use n MMD^2 against the symmetrised grid (finite groups)")
    _common(p, kernel=True, group=True)

    p = sub.add_parser("hotelling", help="Hotelling T^2 (one sample, or two with y)")
    p.add_argument("x"), p.add_argument("y", nargs="?")
    _common(p, mc=False, reference=False, calibration=["f", "asymptotic"])

    p = sub.add_parser("power", help="run a power suite (file or bundled name)")
    p.add_argument("suite")
    p.add_argument("--dry-run", action="store_true", help="list scenarios without running them")
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", default=None)
    p.add_argument("--format", default="csv", choices=["csv", "gnuplot"])

    p = sub.add_parser("returns", help="exchangeability of asset returns from price CSVs")
    p.add_argument("prices", nargs="+", help="one date,adj_close file per asset")
    _common(p, kernel=True, reference=False)

    p = sub.add_parser("make-grid", help="write a reference grid as CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--group", default=None)
    p.add_argument("--reference", default=None,
                   help=f"{', '.join(GENERATORS)} or center_outward (with --radii/--directions)")
    p.add_argument("--radii", type=int, default=None)
    p.add_argument("--directions", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    return parser


# ---------------------------------------------------------------- helpers

def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is None:
        args.seed = int(np.random.SeedSequence().entropy % (2 ** 63))
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _config(args, positional: list[str], options: list[str]) -> dict:
    """Resolved settings plus the argv that reproduces them.

    Thread count and cache use do not affect results, so they are left out.
    """
    cfg = {"command": args.command}
    argv = ["otranks", args.command]
    for name in positional:
        value = getattr(args, name)
        if value is None:
            continue
        cfg[name] = value
        argv += value if isinstance(value, list) else [value]
    for name in options:
        value = getattr(args, name, None)
        cfg[name] = value
        if value is None or value is False:
            continue
        flag = "--" + name.replace("_", "-")
        argv += [flag] if value is True else [flag, str(value)]
    cfg["argv"] = argv
    cfg["version"] = __version__
    return cfg


def _cache(args):
    return None if getattr(args, "no_cache", False) else NullCache()


def _load(path, args, stream: int):
    x = load_sample_csv(path)
    if args.jitter:
        x = jitter(x, args.jitter, np.random.default_rng([args.seed, stream]))
    return x


def _kernel(args) -> st.Kernel:
    if args.kernel == "distance":
        return st.Kernel("distance", alpha=1.0 if args.sigma is None else args.sigma)
    return st.Kernel(args.kernel, sigma=args.sigma)


def _two_sample_grid(args, N, p):
    ref = args.reference or "gaussian"
    if Path(ref).suffix == ".csv" or os.sep in ref:
        return read_grid_csv(ref)
    return make_grid(ref, N, p, proc.derived_seeds(args.seed)[0])


def _symmetry_grid(args, g: SymmetryGroup, n):
    ref = args.reference
    if ref is None:
        return default_symmetry_grid(g, n, proc.derived_seeds(args.seed)[0])
    if Path(ref).suffix == ".csv" or os.sep in ref:
        return read_grid_csv(ref, g)
    return make_grid(ref, n, g.dim, proc.derived_seeds(args.seed)[0],
                     group=g if ref == "quotient_gaussian" else None)


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _emit_report(report, args):
    _emit(report.to_json() if args.format == "json" else report.to_csv(), args.out)


# ---------------------------------------------------------------- commands

_MC = ["B", "seed", "jitter", "format", "out"]


def cmd_ranksum(args):
    _resolve_seed(args)
    x, y = _load(args.x, args, 1), _load(args.y, args, 2)
    grid = _two_sample_grid(args, x.shape[0] + y.shape[0], x.shape[1])
    report = proc.ranksum_test(x, y, grid=grid, score=st.ScoreFunction(args.score), B=args.B,
                               seed=args.seed, calibration=args.calibration,
                               cache=_cache(args), threads=args.threads)
    report.config = _config(args, ["x", "y"], ["reference", "score", "calibration"] + _MC)
    return report


def cmd_rank_mmd(args):
    _resolve_seed(args)
    x, y = _load(args.x, args, 1), _load(args.y, args, 2)
    grid = _two_sample_grid(args, x.shape[0] + y.shape[0], x.shape[1])
    report = proc.rank_mmd_test(x, y, grid=grid, score=st.ScoreFunction(args.score),
                                kernel=_kernel(args), B=args.B, seed=args.seed,
                                cache=_cache(args), threads=args.threads)
    report.config = _config(args, ["x", "y"], ["reference", "score", "kernel", "sigma"] + _MC)
    return report


def cmd_signedrank(args):
    _resolve_seed(args)
    x = _load(args.x, args, 1)
    g = SymmetryGroup.parse(args.group, x.shape[1])
    report = proc.signed_rank_test(x, g, grid=_symmetry_grid(args, g, x.shape[0]),
                                   score=st.ScoreFunction(args.score), B=args.B, seed=args.seed,
                                   calibration=args.calibration, cache=_cache(args),
                                   threads=args.threads)
    report.config = _config(args, ["x"], ["group", "reference", "score", "calibration"] + _MC)
    return report


def cmd_symmetry_mmd(args):
    _resolve_seed(args)
    x = _load(args.x, args, 1)
    g = SymmetryGroup.parse(args.group, x.shape[1])
    report = proc.symmetry_mmd_test(x, g, grid=_symmetry_grid(args, g, x.shape[0]),
                                    kernel=_kernel(args), B=args.B, seed=args.seed,
                                    cache=_cache(args), threads=args.threads,
                                    recentered=args.recentered)
    report.config = _config(args, ["x"], ["group", "reference", "kernel", "sigma", "recentered"] + _MC)
    return report


def cmd_hotelling(args):
    _resolve_seed(args)
    x = _load(args.x, args, 1)
    y = None if args.y is None else _load(args.y, args, 2)
    report = proc.hotelling_test(x, y, calibration=args.calibration)
    report.seed = args.seed
    report.config = _config(args, ["x", "y"], ["calibration", "seed", "jitter", "format", "out"])
    return report


def cmd_returns(args):
    _resolve_seed(args)
    panel = prices_to_returns([read_price_csv(p) for p in args.prices])
    report = exchangeability_report(panel, B=args.B, seed=args.seed, kernel=_kernel(args),
                                    cache=_cache(args), threads=args.threads,
                                    jitter_eps=args.jitter)
    report.config = _config(args, ["prices"], ["kernel", "sigma"] + _MC)
    return report


def cmd_power(args):
    scenarios = bench.load_suite(args.suite)
    cfg = _config(args, ["suite"], ["format", "out"])
    print("# config: " + json.dumps(cfg, sort_keys=True), file=sys.stderr)
    if args.dry_run:
        for s in scenarios:
            print(f"{s.name}\tgenerator={s.generator} n={s.n}"
                  f"{'' if s.m is None else f' m={s.m}'} p={s.p} group={s.group} "
                  f"tests={','.join(s.tests)} reps={s.reps} seed={s.seed}")
        return None

    def progress(i, total, s, rows):
        print(f"[{i}/{total}] {s.name}: " + ", ".join(f"{r.test}={r.power:.3f}" for r in rows),
              file=sys.stderr)

    table = bench.run_suite(scenarios, cache=_cache(args), threads=args.threads, progress=progress)
    _emit(table.to_csv() if args.format == "csv" else table.to_gnuplot(), args.out)
    return None


def cmd_make_grid(args):
    _resolve_seed(args)
    g = None if args.group is None else SymmetryGroup.parse(args.group, args.p)
    if args.reference == "center_outward":
        if args.radii is None or args.directions is None:
            raise InvalidInputError("center_outward needs --radii and --directions")
        grid = center_outward_grid(args.radii, args.directions,
                                   args.n - args.radii * args.directions, args.p, args.seed)
    elif args.reference is None:
        grid = make_grid("gaussian", args.n, args.p, args.seed) if g is None \
            else default_symmetry_grid(g, args.n, args.seed)
    else:
        grid = make_grid(args.reference, args.n, args.p, args.seed,
                         group=g if args.reference == "quotient_gaussian" else None)
    write_grid_csv(grid, sys.stdout if args.out is None else args.out)
    return None


COMMANDS = {
    "ranksum": cmd_ranksum,
    "rank-mmd": cmd_rank_mmd,
    "signedrank": cmd_signedrank,
    "symmetry-mmd": cmd_symmetry_mmd,
    "hotelling": cmd_hotelling,
    "power": cmd_power,
    "returns": cmd_returns,
    "make-grid": cmd_make_grid,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        report = COMMANDS[args.command](args)
        if report is not None:
            _emit_report(report, args)
    except InvalidInputError as exc:
        print(f"otranks: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"otranks: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"otranks: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
