"""Exception hierarchy shared by all verity components."""


class VerityError(Exception):
    """Base class for every error raised by this package."""


# --- SQL frontend ---

class SqlSyntaxError(VerityError):
    """Malformed statement. Carries the offset of the offending token and
    the token set the parser would have accepted there."""

    def __init__(self, message, position, expected=()):
        super().__init__(f"{message} (at offset {position})")
        self.position = position
        self.expected = frozenset(expected)


class UnsupportedFeature(VerityError):
    """Statement uses a SQL feature outside the supported subset."""

    def __init__(self, feature, position=None):
        loc = f" (at offset {position})" if position is not None else ""
        super().__init__(f"unsupported SQL feature: {feature.upper()}{loc}")
        self.feature = feature
        self.position = position


# --- name resolution / evaluation ---

class UnknownTable(VerityError):
    pass


class UnknownColumn(VerityError):
    pass


class AmbiguousColumn(VerityError):
    pass


class EvalError(VerityError):
    """Type mismatch or other failure while evaluating an expression."""


# --- storage engine ---

class DuplicateTable(VerityError):
    pass


class DuplicateColumn(VerityError):
    pass


class BadType(VerityError):
    pass


class ValueTypeError(VerityError):
    """A value cannot be represented in (or coerced to) the declared column type."""


class ArityError(VerityError):
    pass


class DuplicatePrimaryKey(VerityError):
    pass


class NoSuchRow(VerityError):
    pass


class NullPrimaryKey(VerityError):
    pass


# --- ledger ---

class LedgerError(VerityError):
    pass


class EndorsementFailed(LedgerError):
    """A peer refused to endorse a transaction draft."""

    def __init__(self, tx_index, reason):
        super().__init__(f"tx[{tx_index}] rejected: {reason}")
        self.tx_index = tx_index
        self.reason = reason


class StaleState(LedgerError):
    """prev_fingerprint does not match the record's current fingerprint."""

    def __init__(self, row_id, expected, given):
        super().__init__(
            f"stale fingerprint for {row_id}: ledger has {expected}, tx carries {given}"
        )
        self.row_id = row_id
        self.expected = expected
        self.given = given


class DuplicateRowId(LedgerError):
    pass


class UnknownRowId(LedgerError):
    pass


class LedgerCorrupt(LedgerError):
    pass


# --- verifier ---

class TamperDetected(VerityError):
    """Integrity check failed. Carries every alert raised by the query."""

    def __init__(self, alerts, report=None):
        first = alerts[0] if alerts else None
        super().__init__(
            f"tampering detected: {len(alerts)} tuple(s) failed verification"
            + (f" (first: {first.table}/{first.row_id})" if first else "")
        )
        self.alerts = list(alerts)
        self.report = report


class NonScalarSubquery(VerityError):
    """A SET-clause subquery did not return exactly one row and one column."""


class PkUpdateUnsupported(VerityError):
    pass
