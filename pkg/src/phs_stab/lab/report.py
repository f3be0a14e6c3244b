"""Report records and their deterministic on-disk form.

Three files are written per experiment: ``timeseries.csv`` (plot-ready
columns), ``report.txt`` (verdicts and summary observables) and
``certificate.txt``.  The two text files are YAML documents, so they parse
with the same reader as experiment configs.  Wall-clock time is kept out of
them and written to ``timing.txt`` instead, which keeps reruns byte-identical.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

__all__ = [
    "Verdict",
    "ReportRecord",
    "ReportWriteError",
    "check",
    "emit_report",
    "render_csv",
    "render_yaml",
    "REPORT_FILES",
]

REPORT_FILES = ("timeseries.csv", "report.txt", "certificate.txt")

_RELATIONS = {
    "<=": lambda m, b, tol: m <= b + tol,
    "<": lambda m, b, tol: m < b + tol,
    ">=": lambda m, b, tol: m >= b - tol,
    ">": lambda m, b, tol: m > b - tol,
}


class ReportWriteError(OSError):
    pass


@dataclass(frozen=True)
class Verdict:
    """One pass/fail decision: ``measured <relation> bound`` up to ``tolerance``."""

    name: str
    measured: float
    bound: float
    tolerance: float
    relation: str = "<="
    passed: bool = False
    at: float | None = None
    note: str = ""

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "passed": bool(self.passed),
            "measured": _plain(self.measured),
            "relation": self.relation,
            "bound": _plain(self.bound),
            "tolerance": _plain(self.tolerance),
        }
        if self.at is not None:
            d["at"] = _plain(self.at)
        if self.note:
            d["note"] = self.note
        return d


def check(name, measured, bound, tolerance=0.0, relation="<=", at=None, note="") -> Verdict:
    if relation not in _RELATIONS:
        raise ValueError(f"unknown relation {relation!r}")
    measured, bound, tolerance = float(measured), float(bound), float(tolerance)
    ok = bool(_RELATIONS[relation](measured, bound, tolerance)) and not math.isnan(measured)
    return Verdict(name, measured, bound, tolerance, relation, ok,
                   None if at is None else float(at), note)


@dataclass(eq=False)
class ReportRecord:
    name: str
    kind: str
    seed: int
    certificate: dict | None = None
    alternatives: dict = field(default_factory=dict)
    columns: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    refused: str = ""
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.refused and all(v.passed for v in self.verdicts)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 2

    def verdict(self, name) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def to_dict(self) -> dict:
        d = {
            "experiment": self.name,
            "kind": self.kind,
            "seed": int(self.seed),
            "passed": self.passed,
            "exit_code": self.exit_code,
        }
        if self.refused:
            d["refused"] = self.refused
        d["summary"] = {k: _plain(v) for k, v in self.summary.items()}
        d["verdicts"] = [v.to_dict() for v in self.verdicts]
        return d

    def certificate_dict(self) -> dict:
        d = {"experiment": self.name}
        d["certificate"] = None if self.certificate is None else {
            k: _plain(v) for k, v in self.certificate.items()}
        for k, v in self.alternatives.items():
            d[k] = None if v is None else {kk: _plain(vv) for kk, vv in v.items()}
        return d


def _plain(v):
    """Python scalars/lists for YAML; numpy types are unwrapped."""
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    return v


def render_yaml(doc: dict) -> str:
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False, width=1000)


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row of length {len(row)} does not match {len(columns)} columns")
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def emit_report(record: ReportRecord, out_dir) -> dict:
    """Write the report files; returns ``{file name: path}``."""
    out = Path(out_dir)
    contents = {
        "timeseries.csv": render_csv(record.columns, record.rows),
        "report.txt": render_yaml(record.to_dict()),
        "certificate.txt": render_yaml(record.certificate_dict()),
    }
    paths = {}
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in contents.items():
            p = out / name
            p.write_text(text)
            paths[name] = p
        (out / "timing.txt").write_text(f"wall_clock_seconds: {record.wall_clock:.3f}\n")
    except OSError as exc:
        raise ReportWriteError(exc.errno, f"cannot write report: {exc.strerror}",
                               str(exc.filename or out)) from None
    return paths
