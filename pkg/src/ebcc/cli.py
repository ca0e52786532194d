"""Command-line interface.

    ebcc run --config FILE --out FILE [--threads N] [--seed S]
    ebcc ebh --alpha A          (e-values on stdin, 1-based indices on stdout)
    ebcc validate --config FILE
"""

from __future__ import annotations

import argparse
import os
import sys

from .evalues import ebh
from .harness import emit_csv, load_config, run_experiment


def _default_threads() -> int:
    env = os.environ.get("EBCC_THREADS")
    if env:
        return max(int(env), 1)
    return 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ebcc")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="run an experiment config, write CSV")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--threads", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config's base_seed")

    p_ebh = sub.add_parser("ebh", help="e-BH on whitespace-separated e-values "
                                       "from stdin; prints 1-based indices")
    p_ebh.add_argument("--alpha", type=float, required=True)

    p_val = sub.add_parser("validate", help="parse a config and report")
    p_val.add_argument("--config", required=True)

    args = parser.parse_args(argv)

    if args.cmd == "ebh":
        vals = [float(v) for v in sys.stdin.read().split()]
        if not vals:
            print("ebcc ebh: no e-values on stdin", file=sys.stderr)
            return 2
        for j in ebh(vals, args.alpha):
            print(j + 1)
        return 0

    try:
        cfg = load_config(args.config)
    except (OSError, ValueError) as exc:
        print(f"ebcc: bad config: {exc}", file=sys.stderr)
        return 2

    if args.cmd == "validate":
        print(f"ok: kind={cfg.kind} m={cfg.m} alpha={cfg.alpha} "
              f"replications={cfg.replications} base_seed={cfg.base_seed}")
        return 0

    if args.seed is not None:
        cfg.base_seed = args.seed
    threads = args.threads if args.threads is not None else _default_threads()
    rows = run_experiment(cfg, threads=threads)
    emit_csv(rows, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
