"""Embedded relational engine: catalog, typed in-memory tables, execution of
the supported SQL subset, and CSV ingestion.

Execution is plain nested-loop join over the FROM list (derived tables
materialized first), with conjuncts of the WHERE clause applied as soon as
the tables they mention are bound. No indexes, no optimizer.

Mutations come in two flavors: ``apply_row_*`` is the path used by the
verified pipeline, ``raw_*`` is the out-of-band backdoor that simulates an
attacker editing stored data directly. Both mutate storage only; neither
knows anything about the ledger.

Single-writer: mutating calls must be externally serialized. Concurrent
read-only ``exec_select`` calls between mutations are fine.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal, DivisionByZero, InvalidOperation

from . import sqlast as ast
from .errors import (
    AmbiguousColumn,
    ArityError,
    BadType,
    DuplicateColumn,
    DuplicatePrimaryKey,
    DuplicateTable,
    EvalError,
    NoSuchRow,
    NullPrimaryKey,
    SqlSyntaxError,
    UnknownColumn,
    UnknownTable,
    ValueTypeError,
)
from .lexer import EOF, IDENT, OP, Token, tokenize
from .values import NULL, Value, ValueType, coerce, parse_typed, quantize_decimal, render_value

Row = tuple  # tuple[Value, ...]


# --- schema ------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnDef:
    name: str
    type: ValueType


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[ColumnDef, ...]
    primary_key: tuple[str, ...]

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def col_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise UnknownColumn(f"{self.name} has no column {name!r}")

    @property
    def pk_indices(self) -> tuple[int, ...]:
        return tuple(self.col_index(c) for c in self.primary_key)


@dataclass(frozen=True)
class Tuple:
    """A full row of one base table, values aligned to the table's columns."""
    table: str
    values: tuple


class Catalog:
    def __init__(self):
        self.tables: dict[str, TableDef] = {}

    def define(self, d: TableDef):
        if d.name in self.tables:
            raise DuplicateTable(f"table {d.name!r} already exists")
        self.tables[d.name] = d

    def get(self, name: str) -> TableDef:
        try:
            return self.tables[name.lower()]
        except KeyError:
            raise UnknownTable(f"no such table: {name}") from None

    def names(self) -> list[str]:
        return list(self.tables)


def parse_create_table(ddl_text: str) -> TableDef:
    """Parse one ``CREATE TABLE name (col type, ..., PRIMARY KEY (...))``.

    Tables declared without PRIMARY KEY get all columns, in schema order,
    as a composite key.
    """
    toks = tokenize(ddl_text)
    pos = 0

    def peek() -> Token:
        return toks[min(pos, len(toks) - 1)]

    def take(expect_type=None, expect_value=None) -> Token:
        nonlocal pos
        t = peek()
        if expect_type and t.type != expect_type:
            raise SqlSyntaxError(f"expected {expect_type}, found {t.value!r}", t.pos)
        if expect_value and t.value != expect_value:
            raise SqlSyntaxError(f"expected {expect_value!r}, found {t.value!r}", t.pos)
        pos += 1
        return t

    take(IDENT, "create")
    take(IDENT, "table")
    name = take(IDENT).value
    take(OP, "(")
    columns: list[ColumnDef] = []
    pk: tuple[str, ...] = ()
    while True:
        t = take(IDENT)
        if t.value == "primary":
            take(IDENT, "key")
            take(OP, "(")
            pk_cols = [take(IDENT).value]
            while peek().value == ",":
                take(OP, ",")
                pk_cols.append(take(IDENT).value)
            take(OP, ")")
            pk = tuple(pk_cols)
        else:
            col_type = ValueType.from_ddl(take(IDENT).value)
            if any(c.name == t.value for c in columns):
                raise DuplicateColumn(f"duplicate column {t.value!r} in {name}")
            columns.append(ColumnDef(t.value, col_type))
        if peek().value == ",":
            take(OP, ",")
            continue
        break
    take(OP, ")")
    if peek().value == ";":
        take(OP, ";")
    if peek().type != EOF:
        raise SqlSyntaxError("trailing input after CREATE TABLE", peek().pos)
    if not columns:
        raise BadType(f"table {name!r} has no columns")
    if not pk:
        pk = tuple(c.name for c in columns)
    names = {c.name for c in columns}
    for c in pk:
        if c not in names:
            raise UnknownColumn(f"PRIMARY KEY names unknown column {c!r}")
    if len(set(pk)) != len(pk):
        raise DuplicateColumn("duplicate column in PRIMARY KEY")
    return TableDef(name, tuple(columns), pk)


# --- table storage -----------------------------------------------------------

class _Table:
    def __init__(self, d: TableDef):
        self.d = d
        self.rows: dict[tuple, Row] = {}  # pk values -> full row
        self._sorted: list[Row] | None = None

    def _invalidate(self):
        self._sorted = None

    def pk_of(self, row: Row) -> tuple:
        return tuple(row[i] for i in self.d.pk_indices)

    def sorted_rows(self) -> list[Row]:
        if self._sorted is None:
            self._sorted = [
                row for _, row in sorted(self.rows.items(), key=lambda kv: _pk_sort_key(kv[0]))
            ]
        return self._sorted

    def insert(self, row: Row):
        pk = self.pk_of(row)
        if any(v.is_null for v in pk):
            raise NullPrimaryKey(f"NULL primary key in {self.d.name}")
        if pk in self.rows:
            raise DuplicatePrimaryKey(f"duplicate primary key {pk} in {self.d.name}")
        self.rows[pk] = row
        self._invalidate()

    def get(self, pk: tuple) -> Row:
        try:
            return self.rows[pk]
        except KeyError:
            raise NoSuchRow(f"no row with key {pk} in {self.d.name}") from None

    def replace(self, pk: tuple, row: Row):
        if pk not in self.rows:
            raise NoSuchRow(f"no row with key {pk} in {self.d.name}")
        new_pk = self.pk_of(row)
        if new_pk != pk:
            if new_pk in self.rows:
                raise DuplicatePrimaryKey(f"duplicate primary key {new_pk} in {self.d.name}")
            del self.rows[pk]
        self.rows[new_pk] = row
        self._invalidate()

    def delete(self, pk: tuple):
        if pk not in self.rows:
            raise NoSuchRow(f"no row with key {pk} in {self.d.name}")
        del self.rows[pk]
        self._invalidate()


def _pk_sort_key(pk: tuple):
    return tuple(v.sort_key() for v in pk)


# --- expression evaluation ---------------------------------------------------

class Scope:
    """Name-resolution environment over a list of bound row sources."""

    def __init__(self, blocks: list[tuple[str, list[str], int]]):
        # blocks: (binding, column names, global offset)
        self.blocks = blocks
        self.by_binding = {b: (names, off) for b, names, off in blocks}
        self.width = sum(len(names) for _, names, _ in blocks)

    def resolve(self, table: str | None, column: str) -> int:
        if table is not None:
            if table not in self.by_binding:
                raise UnknownTable(f"no table or alias {table!r} in scope")
            names, off = self.by_binding[table]
            hits = [i for i, n in enumerate(names) if n == column]
            if not hits:
                raise UnknownColumn(f"{table!r} has no column {column!r}")
            if len(hits) > 1:
                raise AmbiguousColumn(f"{table}.{column} matches several columns")
            return off + hits[0]
        hits = []
        for b, names, off in self.blocks:
            for i, n in enumerate(names):
                if n == column:
                    hits.append(off + i)
        if not hits:
            raise UnknownColumn(f"no column {column!r} in scope")
        if len(hits) > 1:
            raise AmbiguousColumn(f"column {column!r} is ambiguous")
        return hits[0]

    def all_columns(self) -> list[tuple[str, int]]:
        out = []
        for _, names, off in self.blocks:
            out.extend((n, off + i) for i, n in enumerate(names))
        return out


def eval_expr(e, row: Row, scope: Scope | None, agg_values: dict | None = None) -> Value:
    if isinstance(e, ast.Literal):
        return e.value
    if isinstance(e, ast.BoundCol):
        return row[e.index]
    if isinstance(e, ast.ColumnRef):
        if scope is None:
            raise EvalError(f"column reference {e.column!r} not allowed here")
        return row[scope.resolve(e.table, e.column)]
    if isinstance(e, ast.UnaryMinus):
        v = eval_expr(e.operand, row, scope, agg_values)
        if v.is_null:
            return NULL
        if v.kind is ValueType.INTEGER:
            return Value.integer(-v.raw)
        if v.kind is ValueType.DECIMAL:
            return Value.decimal(-v.raw)
        raise EvalError(f"cannot negate {v.kind.value}")
    if isinstance(e, ast.BinaryOp):
        a = eval_expr(e.left, row, scope, agg_values)
        b = eval_expr(e.right, row, scope, agg_values)
        return _arith(e.op, a, b)
    if isinstance(e, ast.Aggregate):
        if agg_values is not None and e in agg_values:
            return agg_values[e]
        raise EvalError("aggregate not allowed in a row-level expression")
    raise EvalError(f"cannot evaluate {e!r}")


_NUMERIC = (ValueType.INTEGER, ValueType.DECIMAL)
_STRINGY = (ValueType.TEXT, ValueType.DATE)


def _arith(op: str, a: Value, b: Value) -> Value:
    if a.is_null or b.is_null:
        return NULL
    if a.kind not in _NUMERIC or b.kind not in _NUMERIC:
        raise EvalError(f"arithmetic needs numeric operands, got {a.kind.value}/{b.kind.value}")
    if a.kind is ValueType.INTEGER and b.kind is ValueType.INTEGER and op != "/":
        x = {"+": a.raw + b.raw, "-": a.raw - b.raw, "*": a.raw * b.raw}[op]
        return Value.integer(x)
    da = Decimal(a.raw) if a.kind is ValueType.INTEGER else a.raw
    db = Decimal(b.raw) if b.kind is ValueType.INTEGER else b.raw
    try:
        if op == "+":
            r = da + db
        elif op == "-":
            r = da - db
        elif op == "*":
            r = da * db
        elif op == "/":
            r = da / db
        else:
            raise EvalError(f"unknown operator {op!r}")
    except (DivisionByZero, InvalidOperation):
        raise EvalError("division by zero") from None
    return Value.decimal(quantize_decimal(r))


def compare_values(op: str, a: Value, b: Value) -> bool:
    """Typed comparison; any NULL operand makes every comparison false."""
    if a.is_null or b.is_null:
        return False
    if a.kind in _NUMERIC and b.kind in _NUMERIC:
        x, y = a.raw, b.raw
    elif a.kind in _STRINGY and b.kind in _STRINGY:
        x, y = a.raw, b.raw
    else:
        raise EvalError(f"cannot compare {a.kind.value} with {b.kind.value}")
    if op == "=":
        return x == y
    if op == "<>":
        return x != y
    if op == "<":
        return x < y
    if op == "<=":
        return x <= y
    if op == ">":
        return x > y
    if op == ">=":
        return x >= y
    raise EvalError(f"unknown comparison {op!r}")


def _like_regex(pattern: str) -> re.Pattern:
    parts = []
    for ch in pattern:
        if ch == "%":
            parts.append(".*")
        elif ch == "_":
            parts.append(".")
        else:
            parts.append(re.escape(ch))
    return re.compile("".join(parts), re.DOTALL)


def eval_predicate(p, row: Row, scope: Scope) -> bool:
    if isinstance(p, ast.Comparison):
        return compare_values(
            p.op, eval_expr(p.left, row, scope), eval_expr(p.right, row, scope)
        )
    if isinstance(p, ast.LikePredicate):
        v = eval_expr(p.expr, row, scope)
        if v.is_null:
            return False
        if v.kind not in _STRINGY:
            raise EvalError("LIKE applies to text values")
        hit = _like_regex(p.pattern).fullmatch(v.raw) is not None
        return not hit if p.negated else hit
    if isinstance(p, ast.And):
        return eval_predicate(p.left, row, scope) and eval_predicate(p.right, row, scope)
    if isinstance(p, ast.Or):
        return eval_predicate(p.left, row, scope) or eval_predicate(p.right, row, scope)
    raise EvalError(f"cannot evaluate predicate {p!r}")


def _conjuncts(p) -> list:
    if p is None:
        return []
    if isinstance(p, ast.And):
        return _conjuncts(p.left) + _conjuncts(p.right)
    return [p]


def _predicate_bindings(p, scope: Scope) -> set[str]:
    """Bindings referenced by a predicate (bare names resolved via scope)."""
    out: set[str] = set()

    def walk_expr(e):
        if isinstance(e, ast.ColumnRef):
            idx = scope.resolve(e.table, e.column)
            for b, names, off in scope.blocks:
                if off <= idx < off + len(names):
                    out.add(b)
                    return
        elif isinstance(e, ast.BinaryOp):
            walk_expr(e.left)
            walk_expr(e.right)
        elif isinstance(e, ast.UnaryMinus):
            walk_expr(e.operand)
        elif isinstance(e, ast.Aggregate) and e.arg is not None:
            walk_expr(e.arg)

    def walk(pred):
        if isinstance(pred, ast.Comparison):
            walk_expr(pred.left)
            walk_expr(pred.right)
        elif isinstance(pred, ast.LikePredicate):
            walk_expr(pred.expr)
        elif isinstance(pred, (ast.And, ast.Or)):
            walk(pred.left)
            walk(pred.right)

    walk(p)
    return out


# --- result sets -------------------------------------------------------------

@dataclass
class ResultSet:
    names: list[str]
    rows: list[Row]


# --- the database ------------------------------------------------------------

class Database:
    def __init__(self):
        self.catalog = Catalog()
        self._tables: dict[str, _Table] = {}

    # schema & loading

    def create_table(self, ddl_text: str) -> TableDef:
        d = parse_create_table(ddl_text)
        self.catalog.define(d)
        self._tables[d.name] = _Table(d)
        return d

    def load_ddl(self, ddl_text: str) -> list[TableDef]:
        defs = []
        for stmt in ddl_text.split(";"):
            if stmt.strip():
                defs.append(self.create_table(stmt))
        return defs

    def load_csv(self, table: str, stream, null_literal: str = "") -> int:
        t = self._table(table)
        reader = iter_csv(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise ArityError(f"{table}: CSV is empty, header row required") from None
        header_names = [h for h, _ in header]
        if header_names != t.d.column_names():
            raise ArityError(
                f"{table}: CSV header {header_names} does not match schema {t.d.column_names()}"
            )
        n = 0
        for lineno, fields in enumerate(reader, start=2):
            if len(fields) != len(t.d.columns):
                raise ArityError(f"{table} line {lineno}: expected {len(t.d.columns)} fields")
            row = []
            for (raw, quoted), col in zip(fields, t.d.columns):
                if not quoted and raw == null_literal:
                    row.append(NULL)
                    continue
                try:
                    row.append(parse_typed(raw, col.type))
                except ValueTypeError as exc:
                    raise ValueTypeError(f"{table} line {lineno}: {exc}") from None
            t.insert(tuple(row))
            n += 1
        return n

    def dump_csv(self, table: str, stream, null_literal: str = ""):
        t = self._table(table)
        write_csv_row(stream, t.d.column_names(), null_literal)
        for row in t.sorted_rows():
            write_csv_row(
                stream,
                [None if v.is_null else render_value(v) for v in row],
                null_literal,
            )

    def _table(self, name: str) -> _Table:
        self.catalog.get(name)
        return self._tables[name.lower()]

    # reads

    def row_count(self, table: str) -> int:
        return len(self._table(table).rows)

    def rows_of(self, table: str):
        t = self._table(table)
        for row in t.sorted_rows():
            yield Tuple(t.d.name, row)

    def get_row(self, table: str, pk: tuple) -> Tuple:
        t = self._table(table)
        return Tuple(t.d.name, t.get(tuple(pk)))

    def has_row(self, table: str, pk: tuple) -> bool:
        return tuple(pk) in self._table(table).rows

    def pk_of(self, tup: Tuple) -> tuple:
        return self._table(tup.table).pk_of(tup.values)

    def exec_select(self, q: ast.SelectQuery) -> list[Row]:
        return self.exec_select_full(q).rows

    def exec_select_full(self, q: ast.SelectQuery) -> ResultSet:
        sources = []  # (binding, names, rows)
        for item in q.from_items:
            if isinstance(item, ast.BaseTable):
                t = self._table(item.name)
                sources.append((item.binding, t.d.column_names(), t.sorted_rows()))
            else:
                sub = self.exec_select_full(item.subquery)
                sources.append((item.binding, sub.names, sub.rows))

        blocks = []
        off = 0
        for binding, names, _ in sources:
            blocks.append((binding, names, off))
            off += len(names)
        scope = Scope(blocks)

        # bind each conjunct to the deepest FROM item it mentions
        per_depth: list[list] = [[] for _ in sources]
        bindings_order = [b for b, _, _ in sources]
        for conj in _conjuncts(q.where):
            refs = _predicate_bindings(conj, scope)
            depth = max((bindings_order.index(b) for b in refs), default=0)
            per_depth[depth].append(conj)

        joined: list[Row] = []
        width = off

        def loop(depth: int, acc: list):
            if depth == len(sources):
                joined.append(tuple(acc))
                return
            _, names, rows = sources[depth]
            pad = [NULL] * (width - len(acc) - len(names))
            for row in rows:
                acc2 = acc + list(row)
                probe = tuple(acc2 + pad)
                if all(eval_predicate(c, probe, scope) for c in per_depth[depth]):
                    loop(depth + 1, acc2)

        loop(0, [])
        return self._project(q.projections, joined, scope)

    def _project(self, items, rows: list[Row], scope: Scope) -> ResultSet:
        names: list[str] = []
        exprs: list = []
        for i, item in enumerate(items):
            if isinstance(item.expr, ast.Star):
                for n, idx in scope.all_columns():
                    names.append(n)
                    exprs.append(ast.BoundCol(idx))
            else:
                exprs.append(item.expr)
                if item.alias:
                    names.append(item.alias)
                elif isinstance(item.expr, ast.ColumnRef):
                    names.append(item.expr.column)
                else:
                    names.append(f"expr_{i}")

        if any(ast.expr_has_aggregate(e) for e in exprs):
            # Bare aggregates collapse the whole result to a single row.
            # Non-aggregate expressions are taken from the first row
            # (NULL when the input is empty).
            agg_values: dict = {}
            for e in exprs:
                for node in find_aggregates(e):
                    if node not in agg_values:
                        agg_values[node] = eval_aggregate(node, rows, scope)
            base = rows[0] if rows else (NULL,) * scope.width
            out_row = tuple(eval_expr(e, base, scope, agg_values) for e in exprs)
            return ResultSet(names, [out_row])

        out = [tuple(eval_expr(e, row, scope) for e in exprs) for row in rows]
        return ResultSet(names, out)

    # verified-pipeline mutations

    def apply_row_insert(self, tup: Tuple):
        t = self._table(tup.table)
        if len(tup.values) != len(t.d.columns):
            raise ArityError(f"{tup.table}: expected {len(t.d.columns)} values")
        t.insert(tuple(tup.values))

    def apply_row_update(self, table: str, pk: tuple, new_values: tuple):
        t = self._table(table)
        if len(new_values) != len(t.d.columns):
            raise ArityError(f"{table}: expected {len(t.d.columns)} values")
        t.get(tuple(pk))
        t.replace(tuple(pk), tuple(new_values))

    def apply_row_delete(self, table: str, pk: tuple):
        self._table(table).delete(tuple(pk))

    # attacker backdoor: mutates storage with no ledger interaction

    def raw_mutate(self, table: str, pk: tuple, column: str, new_value: Value):
        t = self._table(table)
        idx = t.d.col_index(column)
        if not new_value.is_null:
            new_value = coerce(new_value, t.d.columns[idx].type)
        row = list(t.get(tuple(pk)))
        row[idx] = new_value
        t.replace(tuple(pk), tuple(row))

    def raw_delete(self, table: str, pk: tuple):
        self._table(table).delete(tuple(pk))

    def raw_insert(self, tup: Tuple):
        self.apply_row_insert(tup)

    # misc

    def clone(self) -> "Database":
        """Independent copy. Rows are tuples of immutable Values, so the
        row objects themselves can be shared."""
        db = Database()
        for name, d in self.catalog.tables.items():
            db.catalog.tables[name] = d
            nt = _Table(d)
            nt.rows = dict(self._tables[name].rows)
            db._tables[name] = nt
        return db


def find_aggregates(e):
    if isinstance(e, ast.Aggregate):
        yield e
    elif isinstance(e, ast.BinaryOp):
        yield from find_aggregates(e.left)
        yield from find_aggregates(e.right)
    elif isinstance(e, ast.UnaryMinus):
        yield from find_aggregates(e.operand)


def eval_aggregate(agg: ast.Aggregate, rows: list[Row], scope: Scope) -> Value:
    if agg.is_count_star:
        return Value.integer(len(rows))
    vals = [eval_expr(agg.arg, r, scope) for r in rows]
    vals = [v for v in vals if not v.is_null]
    if agg.func == "count":
        return Value.integer(len(vals))
    if not vals:
        return NULL
    if agg.func in ("sum", "avg"):
        if any(v.kind not in _NUMERIC for v in vals):
            raise EvalError(f"{agg.func} needs numeric input")
        total = Decimal(0)
        all_int = True
        for v in vals:
            if v.kind is ValueType.INTEGER:
                total += v.raw
            else:
                all_int = False
                total += v.raw
        if agg.func == "sum":
            return Value.integer(int(total)) if all_int else Value.decimal(quantize_decimal(total))
        return Value.decimal(quantize_decimal(total / len(vals)))
    # max / min
    best = vals[0]
    for v in vals[1:]:
        op = ">" if agg.func == "max" else "<"
        if compare_values(op, v, best):
            best = v
    return best


# --- CSV ----------------------------------------------------------------------
#
# Dialect: comma-separated, double-quote quoting with "" escape, \n or \r\n
# line endings. Fields come back as (text, quoted) pairs: only unquoted
# fields are eligible to be NULL markers.

def iter_csv(stream):
    data = stream.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    i, n = 0, len(data)
    while i < n:
        fields: list[tuple[str, bool]] = []
        while True:
            if i < n and data[i] == '"':
                i += 1
                buf = []
                while True:
                    if i >= n:
                        raise ValueTypeError("unterminated quoted CSV field")
                    if data[i] == '"':
                        if i + 1 < n and data[i + 1] == '"':
                            buf.append('"')
                            i += 2
                            continue
                        i += 1
                        break
                    buf.append(data[i])
                    i += 1
                fields.append(("".join(buf), True))
            else:
                j = i
                while j < n and data[j] not in (",", "\n", "\r"):
                    j += 1
                fields.append((data[i:j], False))
                i = j
            if i < n and data[i] == ",":
                i += 1
                continue
            break
        if i < n and data[i] == "\r":
            i += 1
        if i < n and data[i] == "\n":
            i += 1
        yield fields


def write_csv_row(stream, fields, null_literal: str = ""):
    # None marks NULL and is written as the (unquoted) null literal; a real
    # text value that would collide with it gets quoted.
    out = []
    for f in fields:
        if f is None:
            out.append(null_literal)
            continue
        if f == null_literal or f == "" or any(ch in f for ch in (",", '"', "\n", "\r")):
            out.append('"' + f.replace('"', '""') + '"')
        else:
            out.append(f)
    stream.write(",".join(out) + "\n")
