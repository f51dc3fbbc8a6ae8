"""Command-line interface: ``ptquantum <command> [options]``.

Commands
    evolve      time series of all quantities at one parameter point
    sweep       max-over-time table on a (gamma/eps, kappa/eps) grid
    bell-sweep  the same restricted to the Bell parameter
    boundary    where a max-over-time quantity crosses its threshold
    ep          samples of the exceptional-point curve
    compare     cellwise ratio/difference of two sweep files
    verify      closed forms against the brute-force oracle

Options may also come from ``--config file.json``, a flat object whose keys
are the long option names without dashes; command-line flags win.
Exit codes: 0 success, 1 verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .gaussian import InitialState
from .model import SystemConfig, SystemKind, ep_curve
from .oracle import VERIFY_DT, verify_closed_forms
from .quantifiers import QUANTITIES, BellSearchConfig
from .sweep import (
    COMPARE_HEADER,
    COMPARE_MODES,
    CSV_HEADER,
    GridSpec,
    TimeScanConfig,
    boundary,
    compare_rows,
    compare_sweeps,
    fmt,
    grid_sweep,
    parse_range,
    read_records,
    record_rows,
    render,
    time_series,
)

EVOLVE_COLUMNS = ("t",) + QUANTITIES + (
    "alpha1_re", "alpha1_im", "alpha2_re", "alpha2_im", "b1", "b2",
    "c1_re", "c1_im", "c2_re", "c2_im", "d_re", "d_im", "dbar_re", "dbar_im",
)


class UsageError(Exception):
    pass


def parse_complex(text) -> complex:
    """``"re,im"`` (or a plain real number) -> complex."""
    if isinstance(text, complex):
        return text
    parts = str(text).replace(" ", "").split(",")
    try:
        if len(parts) == 1:
            return complex(float(parts[0]), 0.0)
        if len(parts) == 2:
            return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"expected 're,im', got {text!r}")


def _range_arg(text):
    try:
        return parse_range(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _quantity_list(text):
    qs = [q.strip() for q in str(text).split(",") if q.strip()]
    for q in qs:
        if q not in QUANTITIES:
            raise argparse.ArgumentTypeError(f"unknown quantity {q!r} (choose from {','.join(QUANTITIES)})")
    return qs


def _kind_arg(text):
    try:
        return SystemKind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _common(p: argparse.ArgumentParser, grid: bool = False, point: bool = False):
    p.add_argument("--config", help="JSON file with default option values")
    p.add_argument("--system", type=_kind_arg, default=SystemKind.STANDARD, help="ad|d|a|dd|aa")
    p.add_argument("--epsilon", type=float, default=1.0, help="linear coupling (frequency unit)")
    if point:
        p.add_argument("--gamma", type=float, default=0.0, help="gamma/eps")
        p.add_argument("--kappa", type=float, default=0.5, help="kappa/eps")
    if grid:
        p.add_argument("--gamma-range", type=_range_arg, default=(0.0, 1.0, 101), metavar="A:B:N")
        p.add_argument("--kappa-range", type=_range_arg, default=(0.0, 1.0, 101), metavar="A:B:N")
    p.add_argument("--tmax", type=float, help="scan horizon in units of 1/eps (default 20)")
    p.add_argument("--dt", type=float, help="time step in units of 1/eps")
    p.add_argument("--alpha1", type=parse_complex, default=0j, metavar="RE,IM")
    p.add_argument("--alpha2", type=parse_complex, default=0j, metavar="RE,IM")
    p.add_argument("--steering-formula", choices=("default", "literal"), default="default")
    p.add_argument("--bell-radial", type=_positive_int, default=12)
    p.add_argument("--bell-angular", type=_positive_int, default=16)
    p.add_argument("--out", default="-", help="output file ('-' for stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=None, help="reserved; deterministic commands ignore it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ptquantum",
        description="Quantumness of two coupled bosonic modes with damping and amplification.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("evolve", help="time series at one parameter point")
    _common(p, point=True)
    p.add_argument("--no-bell", action="store_true", help="skip the Bell search (column left empty)")

    p = sub.add_parser("sweep", help="max-over-time values on a parameter grid")
    _common(p, grid=True)
    p.add_argument("--quantity", type=_quantity_list, default=list(QUANTITIES), help="comma list")

    p = sub.add_parser("bell-sweep", help="Bell-parameter maxima on a parameter grid")
    _common(p, grid=True)

    p = sub.add_parser("boundary", help="threshold crossings of a quantity")
    _common(p, grid=True)
    p.add_argument("--quantity", type=_quantity_list, default=["bell"])
    p.add_argument("--threshold", type=float, default=None)

    p = sub.add_parser("ep", help="exceptional-point curve samples")
    _common(p)
    p.add_argument("--points", type=_positive_int, default=101)

    p = sub.add_parser("compare", help="compare two sweep files cellwise")
    _common(p)
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--mode", choices=COMPARE_MODES, default="ratio")

    p = sub.add_parser("verify", help="check closed forms against the RK4 oracle")
    _common(p)
    p.add_argument("--draws", type=int, default=200)
    p.add_argument("--ep-points", type=int, default=10)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--oracle-dt", type=float, default=VERIFY_DT)
    return parser


def _norm(key: str) -> str:
    return key.replace("-", "").replace("_", "").lower()


def _apply_config(sub: argparse.ArgumentParser, path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot load config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    actions = {_norm(a.dest): a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, value in data.items():
        action = actions.get(_norm(key))
        if action is None:
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(value, bool) or value is None:
            defaults[action.dest] = value
        elif isinstance(value, list):
            defaults[action.dest] = ",".join(str(v) for v in value)
        else:
            # string defaults run through the option's type converter
            defaults[action.dest] = str(value)
    sub.set_defaults(**defaults)


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sub = _subparser(parser, args.command)
        _apply_config(sub, args.config)
        args = parser.parse_args(argv)
    return parser, args


def _emit(text: str, out: str):
    if out in ("-", ""):
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {out}: {exc.strerror or exc}") from exc


def _scan(args) -> TimeScanConfig:
    eps = args.epsilon
    return TimeScanConfig(
        t_max=None if args.tmax is None else args.tmax / eps,
        dt=None if args.dt is None else args.dt / eps,
        steering_formula=args.steering_formula,
    )


def _bell_cfg(args) -> BellSearchConfig:
    return BellSearchConfig(radial_points=args.bell_radial, angular_points=args.bell_angular)


def _grid(args, quantities) -> GridSpec:
    return GridSpec(
        gamma_over_eps=args.gamma_range,
        kappa_over_eps=args.kappa_range,
        kind=args.system,
        init=InitialState(args.alpha1, args.alpha2),
        scan=_scan(args),
        bell_cfg=_bell_cfg(args),
        epsilon=args.epsilon,
        quantities=tuple(quantities),
    )


def cmd_evolve(args) -> int:
    eps = args.epsilon
    cfg = SystemConfig(kappa=args.kappa * eps, gamma=args.gamma * eps, kind=args.system, epsilon=eps)
    t, st, vals = time_series(cfg, InitialState(args.alpha1, args.alpha2), _scan(args), _bell_cfg(args), not args.no_bell)
    cols = [[fmt(x) for x in t]]
    for q in QUANTITIES:
        cols.append([""] * len(t) if (q == "bell" and args.no_bell) else [fmt(x) for x in vals[q]])
    for name in ("alpha1", "alpha2", "b1", "b2", "c1", "c2", "d", "dbar"):
        z = np.broadcast_to(np.asarray(getattr(st, name)), t.shape)
        if name in ("b1", "b2"):
            cols.append([fmt(x) for x in z])
        else:
            cols += [[fmt(x) for x in z.real], [fmt(x) for x in z.imag]]
    rows = [list(r) for r in zip(*cols)]
    _emit(render(EVOLVE_COLUMNS, rows, args.format), args.out)
    return 0


def cmd_sweep(args, quantities) -> int:
    records = grid_sweep(_grid(args, quantities), threads=args.threads)
    _emit(render(CSV_HEADER, record_rows(records), args.format), args.out)
    bad = [r for r in records if r.error]
    for r in bad:
        print(f"warning: cell gamma/eps={r.gamma_over_eps:g} kappa/eps={r.kappa_over_eps:g}: {r.error}", file=sys.stderr)
    return 0


def cmd_boundary(args) -> int:
    if len(args.quantity) != 1:
        raise UsageError("boundary takes exactly one --quantity")
    q = args.quantity[0]
    pts = boundary(_grid(args, [q]), q, args.threshold)
    rows = [[fmt(g), fmt(k), args.system.value, q] for g, k in pts]
    _emit(render(("gamma_over_eps", "kappa_over_eps", "kind", "quantity"), rows, args.format), args.out)
    return 0


def cmd_ep(args) -> int:
    rows = [[fmt(g), fmt(k)] for g, k in ep_curve(args.system, args.points)]
    _emit(render(("gamma_over_eps", "kappa_over_eps"), rows, args.format), args.out)
    return 0


def cmd_compare(args) -> int:
    rows = compare_sweeps(read_records(args.file_a), read_records(args.file_b), args.mode)
    _emit(render(COMPARE_HEADER, compare_rows(rows), args.format), args.out)
    return 0


def cmd_verify(args) -> int:
    seed = 20240615 if args.seed is None else args.seed
    report = verify_closed_forms(
        n_random=args.draws, n_ep=args.ep_points, seed=seed, dt=args.oracle_dt, tolerance=args.tolerance
    )
    print(f"cases: {report.n_cases}")
    print(f"max relative deviation: {report.max_rel_deviation:.3e} (tolerance {report.tolerance:.1e})")
    if not report.passed:
        print(f"worst case: {report.worst_case}")
        print("FAIL")
        return 1
    print("PASS")
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser, args = parse(argv)
    except SystemExit as exc:  # argparse usage errors, --help, --version
        return int(exc.code or 0)
    except UsageError as exc:
        build_parser().print_usage(sys.stderr)
        print(f"ptquantum: error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "evolve":
            return cmd_evolve(args)
        if args.command == "sweep":
            return cmd_sweep(args, args.quantity)
        if args.command == "bell-sweep":
            return cmd_sweep(args, ["bell"])
        if args.command == "boundary":
            return cmd_boundary(args)
        if args.command == "ep":
            return cmd_ep(args)
        if args.command == "compare":
            return cmd_compare(args)
        return cmd_verify(args)
    except (UsageError, ValueError, OSError) as exc:
        _subparser(parser, args.command).print_usage(sys.stderr)
        print(f"ptquantum {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
