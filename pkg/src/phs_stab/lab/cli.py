"""``phs-stab`` command line.

Exit codes: 0 when every verdict passes, 1 on errors (bad config, I/O,
aborted simulation), 2 when a verdict fails or the stability hypothesis
does not hold.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from ..simulate import SimulationAborted
from ..transport import w2_empirical_exact
from .config import ConfigError, load_config
from .experiments import EXPERIMENTS, run_experiment, run_w2_selftest
from .report import ReportWriteError, emit_report

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1 with other errors; 2 means a failed verdict
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="phs-stab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, required=name != "w2", help="experiment YAML file")
        s.add_argument("--seed", type=int, help="overrides PHS_SEED and the config seed")
        s.add_argument("--out", type=Path, help="output directory")
        s.add_argument("-q", "--quiet", action="store_true", help="suppress the verdict summary")
        if name == "w2":
            s.add_argument("--points", nargs=2, type=Path, metavar=("P.csv", "Q.csv"),
                           help="print W2 and the optimal pairing between two point clouds")
            s.add_argument("--selftest", action="store_true", help="run the transport self-test (default)")
    return p


def read_points(path: Path) -> np.ndarray:
    """Numeric CSV, one point per row; a non-numeric first row is treated as a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]
    try:
        pts = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"non-numeric entry: {exc}", source=str(path)) from None
    if pts.ndim != 2 or len(pts) == 0:
        raise ConfigError("expected a non-empty rectangular table of numbers", source=str(path))
    return pts


def _summarise(record, out) -> None:
    status = "PASS" if record.passed else ("REFUSED" if record.refused else "FAIL")
    print(f"{record.kind} {record.name}: {status} (seed {record.seed})")
    if record.refused:
        print(f"  {record.refused}")
    for v in record.verdicts:
        mark = "ok  " if v.passed else "FAIL"
        at = f" at t={v.at:g}" if v.at is not None else ""
        print(f"  {mark} {v.name}: {v.measured:.6g} {v.relation} {v.bound:.6g} (tol {v.tolerance:.3g}){at}")
    if out is not None:
        print(f"  reports in {out}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "w2" and args.points:
            P, Q = read_points(args.points[0]), read_points(args.points[1])
            w2, plan = w2_empirical_exact(P, Q)
            print(f"w2 {w2!r}")
            print("p_index,q_index")
            for i, j in enumerate(plan.perm):
                print(f"{i},{j}")
            return EXIT_OK
        if args.config is None:
            record = run_w2_selftest(seed=args.seed)
            out = args.out
        else:
            cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
            record = run_experiment(args.command, cfg)
            out = cfg.out_dir
        if out is not None:
            emit_report(record, out)
        print(f"wall-clock {record.wall_clock:.2f} s", file=sys.stderr)
    except (ConfigError, ReportWriteError, SimulationAborted, OSError, ValueError) as exc:
        print(f"phs-stab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if not args.quiet:
        _summarise(record, out)
    return record.exit_code


if __name__ == "__main__":
    sys.exit(main())
