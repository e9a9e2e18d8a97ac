"""Benchmark harness: repeated verified execution with per-phase timings.

Each query runs against throwaway clones of storage and ledger, so mutating
statements are repeatable; a run's wall time covers the whole verified
pipeline. Besides the per-query records the harness fits end-to-end time
against effective tuple count: the gateway's core performance property is
that this relationship is linear, with constant per-tuple lookup cost.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

from .parser import parse
from .sqlast import QueryKind, classify, has_nested_select
from .verifier import Verifier

KIND_LETTER = {
    QueryKind.SELECT: "S",
    QueryKind.INSERT: "I",
    QueryKind.UPDATE: "U",
    QueryKind.DELETE: "D",
}


@dataclass
class BenchRecord:
    query_id: str
    kind_tag: str             # S, I, U, D; nested queries tagged e.g. "U(S)"
    tables: list[str]
    tuples_checked: int
    tuples_mutated: int
    tuples_effective: int
    mean_end_to_end: float
    per_tuple: float | None
    mean_ledger_lookup: float
    lookup_per_tuple: float | None
    mean_phases: dict | None = None

    def as_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "kind": self.kind_tag,
            "tables": self.tables,
            "tuples_checked": self.tuples_checked,
            "tuples_mutated": self.tuples_mutated,
            "tuples_effective": self.tuples_effective,
            "mean_end_to_end_s": self.mean_end_to_end,
            "per_tuple_s": self.per_tuple,
            "mean_ledger_lookup_s": self.mean_ledger_lookup,
            "lookup_per_tuple_s": self.lookup_per_tuple,
            "mean_phases_s": self.mean_phases,
        }


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r2: float
    n_points: int


def effective_tuples(kind: QueryKind, checked: int, mutated: int) -> int:
    """Distinct tuples a query touched. Verified rows of UPDATE/DELETE are
    the mutated rows themselves, so only INSERT adds unseen tuples."""
    if kind is QueryKind.INSERT:
        return checked + mutated
    return checked


def kind_tag(q) -> str:
    tag = KIND_LETTER[classify(q)]
    if has_nested_select(q):
        tag += "(S)"
    return tag


def run_query_bench(db, ledger, sql: str, runs: int = 5, principal: str = "peer-1"):
    """Mean timings for one query over ``runs`` runs (plus one warmup),
    each against fresh clones. Returns (times, lookup_times, last_report,
    mean seconds per pipeline phase)."""
    times: list[float] = []
    lookups: list[float] = []
    phases: dict[str, list[float]] = {}
    report = None
    for i in range(runs + 1):
        db2 = db.clone()
        led2 = ledger.clone_in_memory()
        v = Verifier(db2, led2, principal)
        t0 = time.perf_counter()
        _, report = v.process(sql)
        dt = time.perf_counter() - t0
        if i == 0:
            continue  # warmup
        times.append(dt)
        lookups.append(report.elapsed["ledger_lookup"])
        for k, vsec in report.elapsed.items():
            phases.setdefault(k, []).append(vsec)
    mean_phases = {k: statistics.fmean(v) for k, v in phases.items()}
    return times, lookups, report, mean_phases


def run_bench(db, ledger, queries: list[tuple[str, str]], runs: int = 5,
              principal: str = "peer-1") -> tuple[list[BenchRecord], LinearFit | None]:
    records = []
    for qid, sql in queries:
        q = parse(sql)
        times, lookups, report, mean_phases = run_query_bench(db, ledger, sql, runs, principal)
        eff = effective_tuples(classify(q), report.tuples_checked, report.tuples_mutated)
        mean_t = statistics.fmean(times)
        mean_l = statistics.fmean(lookups)
        records.append(BenchRecord(
            query_id=qid,
            kind_tag=kind_tag(q),
            tables=report.tables_touched,
            tuples_checked=report.tuples_checked,
            tuples_mutated=report.tuples_mutated,
            tuples_effective=eff,
            mean_end_to_end=mean_t,
            per_tuple=mean_t / eff if eff else None,
            mean_ledger_lookup=mean_l,
            lookup_per_tuple=mean_l / report.tuples_checked if report.tuples_checked else None,
            mean_phases=mean_phases,
        ))
    return records, fit_records(records)


def fit_records(records: list[BenchRecord]) -> LinearFit | None:
    """Least-squares fit of end-to-end time against effective tuples,
    excluding empty-result queries."""
    pts = [(r.tuples_effective, r.mean_end_to_end) for r in records if r.tuples_effective > 0]
    if len(pts) < 2:
        return None
    xs = [float(x) for x, _ in pts]
    ys = [y for _, y in pts]
    try:
        slope, intercept = statistics.linear_regression(xs, ys)
        r2 = statistics.correlation(xs, ys) ** 2
    except statistics.StatisticsError:
        return None
    return LinearFit(slope, intercept, r2, len(pts))


def parse_queries_file(text: str) -> list[tuple[str, str]]:
    """One query per non-empty line; ``#``/``--`` start comments. A line may
    carry an explicit id as ``id: sql``, otherwise queries are numbered."""
    out = []
    n = 0
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("--"):
            continue
        n += 1
        qid = f"q{n:02d}"
        head, sep, rest = line.partition(":")
        if sep and head.replace("_", "").isalnum() and not head.lower().startswith(
            ("select", "insert", "update", "delete")
        ):
            qid, line = head.strip(), rest.strip()
        out.append((qid, line))
    return out
