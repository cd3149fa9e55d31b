"""Command line runner: ``holofield run <config>``, ``holofield list``, ``holofield describe <name>``.

Exit status is 0 when every check passes, 2 when any check fails and 1 on
errors (bad config, unknown experiment, numerical failure).  HOLOFIELD_THREADS
caps the BLAS/OpenMP thread pools; it has to be set before numpy loads, so the
experiment module is imported lazily.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_threads() -> None:
    n = os.environ.get("HOLOFIELD_THREADS")
    if not n:
        return
    if not n.isdigit() or int(n) < 1:
        raise ValueError(f"HOLOFIELD_THREADS must be a positive integer, got {n!r}")
    for var in THREAD_VARS:
        os.environ[var] = n


def _cmd_list(args, ex) -> int:
    for e in ex.list_experiments():
        tag = f"criterion {e.criterion}" if e.criterion else "extra"
        print(f"{e.name}\t{tag}\t{e.anchor}")
    return 0


def _cmd_describe(args, ex) -> int:
    e = ex.REGISTRY.get(args.experiment)
    if e is None:
        print(f"error: unknown experiment {args.experiment!r}", file=sys.stderr)
        return 1
    print(f"name: {e.name}")
    print(f"anchor: {e.anchor}")
    print(f"description: {e.description}")
    if e.criterion:
        print(f"acceptance criterion: {e.criterion}")
    for k, v in e.defaults.items():
        print(f"default {k} = {v}")
    return 0


def _cmd_run(args, ex) -> int:
    cfg = ex.load_config(args.config)
    rows, checks = ex.run_experiment(cfg)
    text = ex.rows_to_csv(rows)
    out = args.output or cfg.output_path
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(text.encode("utf-8"))
    elif not args.quiet:
        sys.stdout.write(text)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    return 0 if all(c.passed for c in checks) else 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="holofield", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="CSV path (overrides [output] path)")
    r.add_argument("-q", "--quiet", action="store_true", help="do not echo CSV to stdout")
    sub.add_parser("list", help="list registered experiments")
    d = sub.add_parser("describe", help="show one experiment")
    d.add_argument("experiment")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _apply_threads()
        from . import experiments as ex

        handler = {"run": _cmd_run, "list": _cmd_list, "describe": _cmd_describe}[args.verb]
        return handler(args, ex)
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # numerical failures deep in scipy/numpy
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
