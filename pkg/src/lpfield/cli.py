"""Command-line interface: ``lpfield <command> [options]``.

Commands: partition, norm, apply, kernel, sharpness, probe, verify.
Options may also come from a ``key=value`` config file (``--config``);
command-line flags win. Exit status: 0 success, 1 validation error,
2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .errors import ContractError, ConvergenceError
from .grid import GridSpec, format_float, load_grid_function, save_grid_function, write_csv

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class ConfigError(ContractError):
    pass


def read_config(path) -> dict:
    """``key=value`` per line; ``#`` starts a comment; dashes in keys become underscores."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, value = line.partition("=")
            if not eq or not key.strip():
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _float(text):
    return float(text)


def _int_list(text):
    return [int(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _positive(key, value):
    if not value > 0:
        raise ConfigError(f"{key} must be positive (got {value})")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--d", type=int, default=1, help="dimension (1 or 2)")
    common.add_argument("--K", type=int, default=8, help="dyadic depth, N = 2^(K+1)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1, help="recorded; computations are single threaded")
    common.add_argument("--out", default=None, help="output CSV (never overwritten)")
    common.add_argument("--config", default=None, help="key=value file mirroring the flags")

    parser = _Parser(prog="lpfield", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lpfield {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("partition", parents=[common], help="tabulate the dyadic windows")

    p = sub.add_parser("norm", parents=[common], help="F or B norm of a grid function")
    p.add_argument("--space", default="F", choices=["F", "B"])
    p.add_argument("--p", type=_float, default=2.0)
    p.add_argument("--q", type=_float, default=2.0)
    p.add_argument("--s", type=_float, default=0.0)
    p.add_argument("--in", dest="inp", required=False)

    p = sub.add_parser("apply", parents=[common], help="apply a pseudo-differential operator")
    p.add_argument("--symbol", required=False)
    p.add_argument("--in", dest="inp", required=False)

    p = sub.add_parser("kernel", parents=[common], help="dense kernel of one paradifferential band")
    p.add_argument("--symbol", required=False)
    p.add_argument("--band", type=int, default=None)
    p.add_argument("--family", default="a", choices=["a", "b"])
    p.add_argument("--tau", type=_float, default=1.0, help="spatial truncation level")

    p = sub.add_parser("sharpness", parents=[common], help="random-cube growth exponents")
    p.add_argument("--p", type=_float, default=2.0)
    p.add_argument("--q", type=_float, default=1.0)
    p.add_argument("--t", type=_float, default=1.0)
    p.add_argument("--rho", type=_float, default=0.5)
    p.add_argument("--m", type=_float, default=None, help="defaults to the critical order")
    p.add_argument("--levels", type=_int_list, default=list(range(4, 10)))
    p.add_argument("--seeds", type=int, default=64)
    p.add_argument("--seed0", type=int, default=None, help="defaults to --seed")
    p.add_argument("--drop", type=int, default=1, help="smallest levels left out of the fit")

    p = sub.add_parser("probe", parents=[common], help="operator norm ratios over a test family")
    p.add_argument("--symbol", required=False)
    p.add_argument("--in-space", dest="in_space", default="F:2,2,0")
    p.add_argument("--out-space", dest="out_space", default="F:2,2,0")
    p.add_argument("--family", default="bandlimited", choices=["bandlimited", "cubes", "packets"])
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--Ks", type=_int_list, default=None, help="refinement depths; defaults to --K only")

    p = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    p.add_argument("--skip-determinism", action="store_true")
    return parser


def parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known - {"command"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)} for command {args.command!r}")
        converted = {}
        for action in sub._actions:
            if action.dest in cfg:
                raw = cfg[action.dest]
                if isinstance(action, argparse._StoreTrueAction):
                    converted[action.dest] = raw.lower() in ("1", "true", "yes", "on")
                else:
                    try:
                        converted[action.dest] = action.type(raw) if action.type else raw
                    except ValueError as exc:
                        raise ConfigError(f"bad value for {action.dest}: {raw!r}") from exc
        sub.set_defaults(**converted)
        args = parser.parse_args(argv)
    return args


def _resolved(args, skip=()):
    """Resolved configuration as ``(key, value)`` meta pairs."""
    out = [("command", args.command)]
    for key in sorted(vars(args)):
        if key in ("command", "config", "out") or key in skip:
            # the output path is left out so reruns elsewhere stay byte-identical
            continue
        value = getattr(args, key)
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, float):
            value = format_float(value)
        out.append((key, value))
    return out


def _require(args, *keys):
    for key in keys:
        if getattr(args, key, None) in (None, ""):
            raise ConfigError(f"missing required option --{key.replace('_', '-')}")


def _spec(args):
    return GridSpec(args.d, args.K)


def cmd_partition(args, echo):
    from .lp_decomp import build_partition

    spec = _spec(args)
    P = build_partition(spec)
    xi = spec.frequencies().reshape(-1, spec.d)
    w = P.windows.reshape(P.nbands, -1)
    header = [f"xi{a}" for a in range(spec.d)] + ["abs_xi"] + [f"omega{k}" for k in range(P.nbands)] + ["sum"]
    rows = ([*row_xi, float(np.sqrt((row_xi**2).sum())), *w[:, i], float(w[:, i].sum())]
            for i, row_xi in enumerate(xi))
    _emit(args, header, rows, echo)
    err = np.abs(P.windows.sum(0)[P.resolved_mask()] - 1).max()
    echo(f"max |sum - 1| on the resolved lattice: {err:.3e}")


def cmd_norm(args, echo):
    from .lp_decomp import build_partition
    from .spaces import SpaceParams, f_space_norm

    params = SpaceParams(args.p, args.q, args.s, args.space)
    _require(args, "inp")
    f = load_grid_function(args.inp)
    if f.side != "physical":
        raise ConfigError("norm expects a physical-side input")
    value = f_space_norm(f, build_partition(f.spec), params)
    echo(format_float(value))
    if args.out:
        write_csv(args.out, ["space", "p", "q", "s", "value"],
                  [[params.scale, params.p, params.q, params.s, value]],
                  _resolved(args, skip=("d", "K")) + [("d", f.spec.d), ("K", f.spec.K)])


def cmd_apply(args, echo):
    from .psido import apply
    from .symbols import parse_symbol

    _require(args, "symbol", "inp", "out")
    f = load_grid_function(args.inp)
    g = apply(parse_symbol(args.symbol), f)
    # grid size comes from the input file, not from --d/--K
    save_grid_function(args.out, g, _resolved(args, skip=("d", "K")))
    echo(f"wrote {args.out}")


def cmd_kernel(args, echo):
    from .lp_decomp import build_partition
    from .psido import band_kernel
    from .symbols import paradiff_split, parse_symbol, truncate

    _require(args, "symbol", "band", "out")
    spec = _spec(args)
    a = truncate(parse_symbol(args.symbol), args.tau)
    ker = band_kernel(paradiff_split(a, build_partition(spec)), args.band, args.family)
    M = spec.size
    mat = ker.matrix
    rows = ([i, j, mat[i, j].real, mat[i, j].imag] for i in range(M) for j in range(M))
    write_csv(args.out, ["x_index", "y_index", "re", "im"], rows,
              _resolved(args) + [("max_abs", format_float(ker.max_abs()))])
    echo(f"band {args.band}: max |K| = {format_float(ker.max_abs())}")


def cmd_sharpness(args, echo):
    from .experiments import sharpness_growth

    for key in ("p", "q", "t"):
        _positive(key, getattr(args, key))
    if args.seed0 is None:
        args.seed0 = args.seed
    seed0 = args.seed0
    fit = sharpness_growth(args.p, args.q, args.t, args.m, args.rho, args.levels, args.seeds,
                           d=args.d, K=args.K, seed0=seed0, drop_smallest=args.drop)
    args.m = float(fit.params["m"]) + 0.0
    header = ["level", "seed", "input_pth_power", "output_pth_power"]
    rows = []
    for i, L in enumerate(fit.levels):
        for s in range(args.seeds):
            rows.append([int(L), seed0 + s, fit.per_seed[i, s, 0], fit.per_seed[i, s, 1]])
    for i, L in enumerate(fit.levels):
        rows.append([int(L), "mean", fit.input_norm[i], fit.output_norm[i]])
    summary = [("input_slope", format_float(fit.input_slope)),
               ("output_slope", format_float(fit.output_slope)), ("ratio_slope", format_float(fit.ratio_slope)),
               ("residual", format_float(fit.residual))]
    _emit(args, header, rows, echo, summary)
    echo(f"input slope {fit.input_slope:.4f}, output slope {fit.output_slope:.4f}, "
         f"ratio slope {fit.ratio_slope:.4f} (residual {fit.residual:.2e})")


def cmd_probe(args, echo):
    from .experiments import probe_refinement
    from .spaces import SpaceParams
    from .symbols import parse_symbol

    _require(args, "symbol")
    _positive("n", args.n)
    in_p = SpaceParams.parse(args.in_space)
    out_p = SpaceParams.parse(args.out_space)
    Ks = args.Ks or [args.K]
    rep = probe_refinement(lambda: parse_symbol(args.symbol), in_p, out_p, args.family, args.n,
                           d=args.d, Ks=Ks, seed=args.seed)
    rows = []
    for K, r in zip(rep.Ks, rep.reports):
        rows.extend([int(K), i, v] for i, v in enumerate(r.ratios))
    for K, mx in zip(rep.Ks, rep.maxima):
        rows.append([int(K), "max", mx])
    summary = [("evidence_grade", rep.grade), ("variation", format_float(rep.variation))]
    _emit(args, ["K", "draw", "ratio"], rows, echo, summary)
    echo(f"max ratios {', '.join(format_float(v) for v in rep.maxima)}; {rep.grade} (evidence only)")


def cmd_verify(args, echo):
    import os

    from .acceptance import run_all

    if args.out:
        os.makedirs(args.out, exist_ok=False)
    results = run_all(args.out, echo=echo, determinism=not args.skip_determinism)
    failed = [r.number for r in results if not r.passed]
    echo(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_OK if not failed else EXIT_NUMERICAL


def _emit(args, header, rows, echo, extra=()):
    if args.out:
        write_csv(args.out, header, rows, _resolved(args) + list(extra))
        echo(f"wrote {args.out}")


COMMANDS = {
    "partition": cmd_partition,
    "norm": cmd_norm,
    "apply": cmd_apply,
    "kernel": cmd_kernel,
    "sharpness": cmd_sharpness,
    "probe": cmd_probe,
    "verify": cmd_verify,
}


def run(argv=None, echo=print) -> int:
    try:
        args = parse(argv)
        status = COMMANDS[args.command](args, echo)
        return EXIT_OK if status is None else status
    except ConvergenceError as exc:
        print(f"lpfield: numerical failure: {exc}", file=sys.stderr)
        for step in exc.trace:
            print(f"  {step}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ContractError, FileExistsError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"lpfield: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
