"""Run reports: checks, metric tables and deterministic output files.

``report.json`` and the CSV tables depend only on the config and seeds; the
timestamp and wall-clock go to ``meta.json`` so reruns can be diffed bytewise.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PROFILE_HEADER = ("x_macro", "empirical", "reference", "abs_err")
SERIES_HEADER = ("t", "value", "stderr")
RIEMANN_HEADER = ("v", "u")

EXACT = "exact"
STATISTICAL = "statistical"


def _clean(v):
    """JSON-safe scalars: numpy types unwrapped, non-finite floats as strings."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    return v


@dataclass
class Check:
    """One pass/fail verdict.

    ``kind`` is ``exact`` for deterministic identities and ``statistical``
    for claims carrying a sample size and confidence level.
    """

    name: str
    passed: bool
    value: float
    threshold: float
    relation: str = "<="
    kind: str = EXACT
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "kind": self.kind,
            "value": _clean(self.value),
            "relation": self.relation,
            "threshold": _clean(self.threshold),
            "detail": _clean(self.detail),
        }


def check_le(name, value, threshold, kind=EXACT, **detail) -> Check:
    return Check(name, bool(value <= threshold), float(value), float(threshold), "<=", kind, detail)


def check_ge(name, value, threshold, kind=EXACT, **detail) -> Check:
    return Check(name, bool(value >= threshold), float(value), float(threshold), ">=", kind, detail)


def check_true(name, ok, kind=EXACT, **detail) -> Check:
    return Check(name, bool(ok), float(bool(ok)), 1.0, "==", kind, detail)


@dataclass
class Table:
    header: tuple
    rows: list

    def to_csv(self) -> str:
        lines = [",".join(self.header)]
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v) + 0.0)  # no negative zero


def profile_table(x, empirical, reference) -> Table:
    x, e, r = (np.asarray(a, dtype=float) for a in (x, empirical, reference))
    return Table(PROFILE_HEADER, list(zip(x, e, r, np.abs(e - r))))


def series_table(t, value, stderr) -> Table:
    return Table(SERIES_HEADER, list(zip(*(np.asarray(a, dtype=float) for a in (t, value, stderr)))))


@dataclass
class Report:
    experiment: str
    config: dict
    seeds: list
    checks: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    started: float = field(default_factory=time.time)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def as_dict(self) -> dict:
        from dephydro import __version__

        return {
            "experiment": self.experiment,
            "version": __version__,
            "passed": self.passed,
            "seeds": _clean(self.seeds),
            "config": _clean(self.config),
            "checks": [c.as_dict() for c in self.checks],
            "metrics": _clean(self.metrics),
            "tables": sorted(self.tables),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2) + "\n"

    def summary_lines(self) -> list[str]:
        out = []
        for c in self.checks:
            tag = "PASS" if c.passed else "FAIL"
            out.append(f"{tag} {c.name}: {c.value:.6g} {c.relation} {c.threshold:.6g} [{c.kind}]")
        return out

    def write(self, out_dir: str | Path, config_echo: str | None = None) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        for name, table in sorted(self.tables.items()):
            (out / name).write_text(table.to_csv())
        if config_echo is not None:
            (out / "config.txt").write_text(config_echo)
        meta = {
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(self.started)),
            "wall_clock_s": round(time.time() - self.started, 3),
        }
        (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
        return out
