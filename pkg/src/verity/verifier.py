"""The verification gateway.

Every statement runs through the same pipeline: parse, widen, execute the
wide query, fingerprint-check every distinct base tuple it touched against
the ledger, and only then release results or apply mutations. For mutating
statements the ledger batch commits strictly before storage is touched, so
a ledger rejection leaves the database unchanged.

Detection is access-triggered: a tuple tampered out-of-band fails its
fingerprint check the first time any verified query touches it. The two
audits catch what access alone cannot: count mismatches from illegitimate
deletes, and (full scan) unknown fingerprints plus ledger-active rows that
vanished from storage.

Callers must not run two verified operations concurrently: the pipeline is
an externally-serialized facade, which is also what closes the
check-to-use window between verification and release.
"""

from __future__ import annotations

import datetime
import hashlib
import time
from dataclasses import dataclass, field

from . import sqlast as ast
from .errors import (
    ArityError,
    DuplicateColumn,
    DuplicatePrimaryKey,
    NonScalarSubquery,
    NullPrimaryKey,
    PkUpdateUnsupported,
    TamperDetected,
    UnsupportedFeature,
)
from .fingerprint import fingerprint, fingerprint_tuple, row_id
from .ledger import LedgerInterface, TxDraft, TxKind
from .parser import parse
from .rewriter import change_projection, project_results, tuples_of
from .sqlast import QueryKind, classify
from .storage import Database, Scope, Tuple, eval_expr
from .values import NULL, coerce

PHASES = ("parse", "rewrite", "db_exec", "ledger_lookup", "ledger_commit")


@dataclass
class TamperAlert:
    row_id: str
    table: str
    expected: str   # fingerprint hex, or "ABSENT" / "DELETED"
    computed: str
    query_hash: str
    timestamp: int


@dataclass
class VerificationReport:
    query_kind: QueryKind | None
    tables_touched: list[str]
    tuples_checked: int      # distinct row ids verified
    tuples_seen: int         # raw tuple occurrences before memoization
    tuples_mutated: int
    ledger_txs_committed: int
    elapsed: dict
    outcome: str  # "verified" | "tampered"
    alerts: list = field(default_factory=list)

    @property
    def end_to_end(self) -> float:
        return sum(self.elapsed.values())


@dataclass
class MutationSummary:
    kind: QueryKind
    table: str
    rows_affected: int
    ledger_txs: int
    block_height: int | None


@dataclass
class CountMismatch:
    table: str
    db_count: int
    ledger_count: int


@dataclass
class MissingRow:
    row_id: str
    table: str


class _Ctx:
    """Per-statement accumulator: timings, distinct verified row ids, alerts."""

    def __init__(self, query_text: str, clock, kind=None):
        self.kind = kind
        self.elapsed = {p: 0.0 for p in PHASES}
        self.checked: set[str] = set()
        self.seen = 0
        self.alerts: list[TamperAlert] = []
        self.tables: list[str] = []
        self.mutated = 0
        self.txs = 0
        self.query_hash = hashlib.sha256(query_text.encode("utf-8")).hexdigest()
        self.clock = clock

    def touch_table(self, name: str):
        if name not in self.tables:
            self.tables.append(name)


class _Timer:
    def __init__(self, ctx: _Ctx, phase: str):
        self.ctx = ctx
        self.phase = phase

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.ctx.elapsed[self.phase] += time.perf_counter() - self.t0


class Verifier:
    def __init__(self, db: Database, ledger: LedgerInterface, principal: str = "peer-1",
                 clock=None, audit_log: str | None = None):
        self.db = db
        self.ledger = ledger
        self.principal = principal
        self.clock = clock or (lambda: int(time.time()))
        self.audit_log = audit_log

    # --- bootstrap -----------------------------------------------------------

    def bootstrap(self) -> dict[str, int]:
        """Fingerprint every tuple of every table and record row counts.

        One block per table; the ledger's duplicate check makes a second
        bootstrap (or a row-id collision) fail loudly.
        """
        counts: dict[str, int] = {}
        for table in self.db.catalog.names():
            td = self.db.catalog.get(table)
            drafts = []
            n = 0
            for tup in self.db.rows_of(table):
                rid, fp = fingerprint_tuple(tup, td.pk_indices)
                drafts.append(TxDraft(TxKind.PUT, table, self.principal,
                                      row_id=rid, fingerprint=fp))
                n += 1
            drafts.append(TxDraft(TxKind.ADJUST_ROW_COUNT, table, self.principal, delta=n))
            self.ledger.submit(drafts, self.principal)
            counts[table] = n
        return counts

    # --- statement entry points ----------------------------------------------

    def process(self, sql_text: str, principal: str | None = None):
        """Parse, dispatch, verify. Returns (payload, report); the payload is
        a row list for SELECT and a MutationSummary otherwise. Raises
        TamperDetected (with all alerts) instead of releasing anything."""
        ctx = _Ctx(sql_text, self.clock)
        with _Timer(ctx, "parse"):
            q = parse(sql_text)
        kind = classify(q)
        ctx.kind = kind
        if kind is QueryKind.SELECT:
            rows, _ = self._select(q, ctx)
            return rows, self._report(kind, ctx)
        principal = principal or self.principal
        if kind is QueryKind.UPDATE:
            summary = self._update(q, ctx, principal)
        elif kind is QueryKind.INSERT:
            summary = self._insert(q, ctx, principal)
        else:
            summary = self._delete(q, ctx, principal)
        return summary, self._report(kind, ctx)

    def verified_select(self, q: ast.SelectQuery):
        ctx = _Ctx(ast.render(q), self.clock, QueryKind.SELECT)
        rows, _ = self._select(q, ctx)
        return rows, self._report(QueryKind.SELECT, ctx)

    def verified_update(self, q: ast.UpdateQuery, principal: str | None = None):
        ctx = _Ctx(ast.render(q), self.clock, QueryKind.UPDATE)
        summary = self._update(q, ctx, principal or self.principal)
        return summary, self._report(QueryKind.UPDATE, ctx)

    def verified_insert(self, q: ast.InsertQuery, principal: str | None = None):
        ctx = _Ctx(ast.render(q), self.clock, QueryKind.INSERT)
        summary = self._insert(q, ctx, principal or self.principal)
        return summary, self._report(QueryKind.INSERT, ctx)

    def verified_delete(self, q: ast.DeleteQuery, principal: str | None = None):
        ctx = _Ctx(ast.render(q), self.clock, QueryKind.DELETE)
        summary = self._delete(q, ctx, principal or self.principal)
        return summary, self._report(QueryKind.DELETE, ctx)

    # --- the verified SELECT pipeline ----------------------------------------

    def _select(self, q: ast.SelectQuery, ctx: _Ctx):
        with _Timer(ctx, "rewrite"):
            rw = change_projection(q, self.db.catalog)
        with _Timer(ctx, "db_exec"):
            wide_rows = self.db.exec_select(rw.wide_query)
        with _Timer(ctx, "ledger_lookup"):
            for exposure in rw.column_map:
                ctx.touch_table(exposure.table)
                pk_idx = exposure.tabledef.pk_indices
                for row in wide_rows:
                    ctx.seen += 1
                    tup = tuples_of(row, exposure)
                    rid, fp = fingerprint_tuple(tup, pk_idx)
                    if rid in ctx.checked:
                        continue
                    ctx.checked.add(rid)
                    rec = self.ledger.get_current(rid)
                    if rec is None:
                        self._alert(ctx, rid, exposure.table, "ABSENT", fp)
                    elif rec.status != "active":
                        self._alert(ctx, rid, exposure.table, "DELETED", fp)
                    elif rec.fingerprint != fp:
                        self._alert(ctx, rid, exposure.table, rec.fingerprint, fp)
        if ctx.alerts:
            self._raise_tampered(ctx)
        with _Timer(ctx, "db_exec"):
            rows = project_results(wide_rows, rw)
        return rows, rw

    # --- UPDATE ----------------------------------------------------------------

    def _update(self, q: ast.UpdateQuery, ctx: _Ctx, principal: str) -> MutationSummary:
        td = self.db.catalog.get(q.table)
        ctx.touch_table(td.name)

        seen_cols = set()
        for a in q.assignments:
            td.col_index(a.column)  # UnknownColumn on bad names
            if a.column in td.primary_key:
                raise PkUpdateUnsupported(f"cannot SET primary-key column {a.column!r}")
            if a.column in seen_cols:
                raise DuplicateColumn(f"column {a.column!r} assigned twice")
            seen_cols.add(a.column)

        # scalar subqueries run through the verified SELECT pipeline first
        scalar_values: dict[int, object] = {}
        for i, a in enumerate(q.assignments):
            if isinstance(a.value, ast.ScalarSubquery):
                rows, _ = self._select(a.value.query, ctx)
                if len(rows) != 1 or len(rows[0]) != 1:
                    raise NonScalarSubquery(
                        f"SET subquery for {a.column!r} returned "
                        f"{len(rows)} row(s); exactly one value required"
                    )
                scalar_values[i] = rows[0][0]

        old_rows, _ = self._select(self._select_star(q.table, q.where), ctx)

        scope = Scope([(td.name, td.column_names(), 0)])
        drafts = []
        mutations = []
        for old in old_rows:
            new_values = list(old)
            for i, a in enumerate(q.assignments):
                idx = td.col_index(a.column)
                if i in scalar_values:
                    v = scalar_values[i]
                else:
                    v = eval_expr(a.value, old, scope)
                if not v.is_null:
                    v = coerce(v, td.columns[idx].type)
                new_values[idx] = v
            old_tup = Tuple(td.name, tuple(old))
            new_tup = Tuple(td.name, tuple(new_values))
            rid, old_fp = fingerprint_tuple(old_tup, td.pk_indices)
            new_fp = fingerprint(rid, new_tup)
            drafts.append(TxDraft(TxKind.UPDATE, td.name, principal, row_id=rid,
                                  fingerprint=new_fp, prev_fingerprint=old_fp))
            mutations.append((tuple(old[i] for i in td.pk_indices), tuple(new_values)))

        height = self._commit(ctx, drafts, principal)
        with _Timer(ctx, "db_exec"):
            for pk, new_values in mutations:
                self.db.apply_row_update(td.name, pk, new_values)
        ctx.mutated = len(mutations)
        return MutationSummary(QueryKind.UPDATE, td.name, len(mutations), len(drafts), height)

    # --- INSERT ----------------------------------------------------------------

    def _insert(self, q: ast.InsertQuery, ctx: _Ctx, principal: str) -> MutationSummary:
        td = self.db.catalog.get(q.table)
        ctx.touch_table(td.name)

        col_idx = []
        seen = set()
        for c in q.columns:
            if c in seen:
                raise DuplicateColumn(f"column {c!r} listed twice")
            seen.add(c)
            col_idx.append(td.col_index(c))
        for pk_col in td.primary_key:
            if pk_col not in seen:
                raise NullPrimaryKey(f"insert must provide primary-key column {pk_col!r}")

        if isinstance(q.source, ast.SelectSource):
            for sel in ast.iter_selects(q.source.query):
                for item in sel.from_items:
                    if isinstance(item, ast.BaseTable) and item.name == td.name:
                        raise UnsupportedFeature(
                            f"INSERT ... SELECT reading its own target table {td.name!r}"
                        )
            src_rows, _ = self._select(q.source.query, ctx)
        else:
            src_rows = []
            for row_exprs in q.source.rows:
                src_rows.append(tuple(eval_expr(e, (), None) for e in row_exprs))

        new_tuples = []
        for r in src_rows:
            if len(r) != len(q.columns):
                raise ArityError(
                    f"insert supplies {len(r)} values for {len(q.columns)} columns"
                )
            values = [NULL] * len(td.columns)
            for v, idx in zip(r, col_idx):
                values[idx] = v if v.is_null else coerce(v, td.columns[idx].type)
            new_tuples.append(Tuple(td.name, tuple(values)))

        batch_pks = set()
        drafts = []
        inserts = []
        for tup in new_tuples:
            pk = tuple(tup.values[i] for i in td.pk_indices)
            if any(v.is_null for v in pk):
                raise NullPrimaryKey(f"NULL primary key in insert into {td.name}")
            if pk in batch_pks:
                raise DuplicatePrimaryKey(f"duplicate key {pk} within insert batch")
            batch_pks.add(pk)
            if self.db.has_row(td.name, pk):
                raise DuplicatePrimaryKey(f"key {pk} already present in {td.name}")
            rid, fp = fingerprint_tuple(tup, td.pk_indices)
            drafts.append(TxDraft(TxKind.PUT, td.name, principal, row_id=rid, fingerprint=fp))
            inserts.append(tup)
        if drafts:
            drafts.append(TxDraft(TxKind.ADJUST_ROW_COUNT, td.name, principal,
                                  delta=len(inserts)))

        height = self._commit(ctx, drafts, principal)
        with _Timer(ctx, "db_exec"):
            for tup in inserts:
                self.db.apply_row_insert(tup)
        ctx.mutated = len(inserts)
        return MutationSummary(QueryKind.INSERT, td.name, len(inserts), len(drafts), height)

    # --- DELETE ----------------------------------------------------------------

    def _delete(self, q: ast.DeleteQuery, ctx: _Ctx, principal: str) -> MutationSummary:
        td = self.db.catalog.get(q.table)
        ctx.touch_table(td.name)
        old_rows, _ = self._select(self._select_star(q.table, q.where), ctx)

        drafts = []
        pks = []
        for old in old_rows:
            tup = Tuple(td.name, tuple(old))
            rid, fp = fingerprint_tuple(tup, td.pk_indices)
            drafts.append(TxDraft(TxKind.MARK_DELETED, td.name, principal,
                                  row_id=rid, prev_fingerprint=fp))
            pks.append(tuple(old[i] for i in td.pk_indices))
        if drafts:
            drafts.append(TxDraft(TxKind.ADJUST_ROW_COUNT, td.name, principal,
                                  delta=-len(pks)))

        height = self._commit(ctx, drafts, principal)
        with _Timer(ctx, "db_exec"):
            for pk in pks:
                self.db.apply_row_delete(td.name, pk)
        ctx.mutated = len(pks)
        return MutationSummary(QueryKind.DELETE, td.name, len(pks), len(drafts), height)

    # --- audits ----------------------------------------------------------------

    def audit_counts(self) -> list[CountMismatch]:
        """Compare per-table storage row counts with the ledger counts."""
        out = []
        for table in self.db.catalog.names():
            db_n = self.db.row_count(table)
            led_n = self.ledger.get_row_count(table)
            if db_n != led_n:
                out.append(CountMismatch(table, db_n, led_n))
        return out

    def audit_full(self) -> tuple[list[TamperAlert], list[MissingRow]]:
        """Fingerprint-check every stored tuple, then check every
        ledger-active row id for presence in storage."""
        now = self.clock()
        qh = hashlib.sha256(b"audit:full").hexdigest()
        alerts: list[TamperAlert] = []
        missing: list[MissingRow] = []
        for table in self.db.catalog.names():
            td = self.db.catalog.get(table)
            seen: set[str] = set()
            for tup in self.db.rows_of(table):
                rid, fp = fingerprint_tuple(tup, td.pk_indices)
                seen.add(rid)
                rec = self.ledger.get_current(rid)
                if rec is None:
                    alerts.append(TamperAlert(rid, table, "ABSENT", fp, qh, now))
                elif rec.status != "active":
                    alerts.append(TamperAlert(rid, table, "DELETED", fp, qh, now))
                elif rec.fingerprint != fp:
                    alerts.append(TamperAlert(rid, table, rec.fingerprint, fp, qh, now))
            for rec in self.ledger.scan_active(table):
                if rec.row_id not in seen:
                    missing.append(MissingRow(rec.row_id, table))
        if alerts:
            self._log_alerts(alerts)
        return alerts, missing

    # --- helpers ----------------------------------------------------------------

    @staticmethod
    def _select_star(table: str, where) -> ast.SelectQuery:
        return ast.SelectQuery(
            (ast.ProjectionItem(ast.Star(), None),),
            (ast.BaseTable(table, None),),
            where,
        )

    def _commit(self, ctx: _Ctx, drafts, principal: str) -> int | None:
        if not drafts:
            return None
        with _Timer(ctx, "ledger_commit"):
            block = self.ledger.submit(drafts, principal)
        ctx.txs += len(drafts)
        return block.height

    def _alert(self, ctx: _Ctx, rid: str, table: str, expected: str, computed: str):
        ctx.alerts.append(
            TamperAlert(rid, table, expected, computed, ctx.query_hash, self.clock())
        )

    def _raise_tampered(self, ctx: _Ctx):
        report = self._report(ctx.kind, ctx, outcome="tampered")
        self._log_alerts(ctx.alerts)
        raise TamperDetected(ctx.alerts, report)

    def _report(self, kind, ctx: _Ctx, outcome: str = "verified") -> VerificationReport:
        return VerificationReport(
            query_kind=kind,
            tables_touched=list(ctx.tables),
            tuples_checked=len(ctx.checked),
            tuples_seen=ctx.seen,
            tuples_mutated=ctx.mutated,
            ledger_txs_committed=ctx.txs,
            elapsed=dict(ctx.elapsed),
            outcome=outcome,
            alerts=list(ctx.alerts),
        )

    def _log_alerts(self, alerts):
        if not self.audit_log:
            return
        with open(self.audit_log, "a", encoding="utf-8") as f:
            for a in alerts:
                ts = datetime.datetime.fromtimestamp(
                    a.timestamp, tz=datetime.timezone.utc
                ).isoformat()
                f.write(f"{ts}\t{a.table}\t{a.row_id}\t{a.expected}\t{a.computed}\n")
