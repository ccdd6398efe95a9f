"""Tracking reports and their CSV/JSON serialization.

CSV column order: ``k, timestamp, cost, T, T_prime, L, flops, drift``
followed by one ``V_<bus>`` column per reported bus. Floats are written
with ``repr`` so output is byte-deterministic and reads back exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

SCALAR_COLUMNS = ("k", "timestamp", "cost", "T", "T_prime", "L", "flops", "drift")


@dataclass
class StepRecord:
    k: int
    timestamp: float
    cost: float
    T: float
    T_prime: float
    L: float
    flops: int  # cumulative, cubic solves charged at their flop cost
    drift: float  # observed |L^k - L^{k-1}| at the warm-start state, a lower bound on e
    vmag: list[float] = field(default_factory=list)


@dataclass
class TrackingReport:
    header: dict
    records: list[StepRecord] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    @property
    def report_buses(self) -> list:
        return list(self.header.get("report_buses", []))

    def columns(self) -> list[str]:
        return list(SCALAR_COLUMNS) + [f"V_{b}" for b in self.report_buses]

    def check(self) -> list[str]:
        """Violations of the record invariants (empty when consistent)."""
        out = []
        prev_k, prev_flops = -math.inf, -math.inf
        for r in self.records:
            if r.T_prime > r.T:
                out.append(f"step {r.k}: T' > T")
            if r.flops < prev_flops:
                out.append(f"step {r.k}: cumulative flops decreased")
            if r.k <= prev_k:
                out.append(f"step {r.k}: records out of order")
            if len(r.vmag) != len(self.report_buses):
                out.append(f"step {r.k}: wrong number of voltage entries")
            prev_k, prev_flops = r.k, r.flops
        return out

    def to_dict(self) -> dict:
        return {
            "header": self.header,
            "records": [asdict(r) for r in self.records],
            "failures": self.failures,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrackingReport":
        return cls(data["header"], [StepRecord(**r) for r in data["records"]], list(data.get("failures", [])))


def _fmt(v) -> str:
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def report_to_csv(report: TrackingReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(report.columns())
    for r in report.records:
        row = [r.k, r.timestamp, r.cost, r.T, r.T_prime, r.L, r.flops, r.drift] + list(r.vmag)
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def report_to_json(report: TrackingReport) -> str:
    return json.dumps(report.to_dict(), indent=1, sort_keys=True)


def read_csv_records(path: str | Path) -> tuple[list[str], list[StepRecord]]:
    """Parse a CSV written by :func:`emit_outputs`."""
    rows = list(csv.reader(io.StringIO(Path(path).read_text(encoding="utf-8"))))
    cols, body = rows[0], rows[1:]
    n = len(SCALAR_COLUMNS)
    if tuple(cols[:n]) != SCALAR_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {cols[:n]}")
    recs = []
    for row in body:
        recs.append(StepRecord(
            int(row[0]), float(row[1]), float(row[2]), float(row[3]), float(row[4]), float(row[5]),
            int(row[6]), float(row[7]), [float(v) for v in row[n:]],
        ))
    return cols, recs


def read_report(path: str | Path) -> TrackingReport:
    try:
        return TrackingReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def emit_outputs(report: TrackingReport, fmt: str, path: str | Path) -> Path:
    """Write ``report`` as ``csv`` or ``json``; I/O errors name the path."""
    if fmt == "csv":
        text = report_to_csv(report)
    elif fmt == "json":
        text = report_to_json(report)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path
