"""Command line entry point: ``msgamma check <name> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import (
    CHECKS,
    FIXTURE_DIR,
    SpecError,
    configured_checks,
    run_check,
    spec_from_config,
    summary_line,
    write_report,
)
from .toric import FanError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _partition(text: str) -> list[list[int]]:
    """'0,1;2' -> [[0, 1], [2]]"""
    try:
        return [[int(x) for x in grp.split(",") if x.strip()] for grp in text.split(";") if grp.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected groups like '0,1;2', got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="msgamma", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    c = sub.add_parser("check", help="run a named check")
    c.add_argument("name", choices=CHECKS + ("all",))
    c.add_argument("--fan", help="fan file (JSON)")
    c.add_argument("--lambda", dest="lam", type=_floats, help="comma-separated lambda_j")
    c.add_argument("--z", type=_floats)
    c.add_argument("--s", type=_floats, help="s grid; for partitions, c values per point")
    c.add_argument("--t", type=_floats, help="t grid for gamma-i")
    c.add_argument("--m", type=_floats, help="log-levels for the large-volume limit in dh")
    c.add_argument("--degree", type=int, dest="N", help="truncation: include c1.d <= N")
    c.add_argument("--tol", type=float)
    c.add_argument("--method", choices=("auto", "quad", "mc"))
    c.add_argument("--seed", type=int)
    c.add_argument("--partition", type=_partition, help="ray-index groups, e.g. '0,1;2'")
    c.add_argument("--side", choices=("section", "total"))
    c.add_argument("--out", help="report file (JSON)")
    c.add_argument("--csv", help="per-point CSV file")
    c.add_argument("--fixtures", help="directory of .fan files (check all)")
    c.add_argument("--out-dir", help="report directory (check all)")
    return p


def _overrides(args) -> dict:
    keys = ("lam", "z", "s", "t", "m", "N", "tol", "method", "seed", "partition", "side")
    return {k: getattr(args, k) for k in keys}


def _run_all(args) -> int:
    fdir = Path(args.fixtures) if args.fixtures else FIXTURE_DIR
    if not fdir.is_dir():
        print(f"error: fixture directory not found: {fdir}", file=sys.stderr)
        return EXIT_IO
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
    ok = True
    for fan in sorted(fdir.glob("*.fan")):
        for name in configured_checks(fan):
            spec = spec_from_config(name, fan, {"method": args.method, "seed": args.seed})
            rep = run_check(spec)
            ok &= rep.passed
            print(summary_line(rep))
            if out_dir:
                write_report(rep, out_dir / f"{fan.stem}.{name}.report",
                             out_dir / f"{fan.stem}.{name}.csv" if args.csv else None)
    return EXIT_OK if ok else EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.name == "all":
            return _run_all(args)
        if not args.fan:
            print("error: --fan is required", file=sys.stderr)
            return EXIT_USAGE
        if not Path(args.fan).is_file():
            print(f"error: cannot read fan file {args.fan}", file=sys.stderr)
            return EXIT_IO
        spec = spec_from_config(args.name, args.fan, _overrides(args))
        rep = run_check(spec)
    except (SpecError, FanError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(summary_line(rep))
    for p in rep.points:
        if p.note and not p.passed:
            print(f"  {p.params}: {p.note}")
    for m in rep.messages:
        print(f"  {m}")
    try:
        if args.out:
            write_report(rep, args.out, args.csv)
        elif args.csv:
            Path(args.csv).write_text(rep.to_csv())
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK if rep.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
