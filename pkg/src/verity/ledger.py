"""Simulated permissioned blockchain holding tuple fingerprints.

Blocks are hash-chained (SHA-256 over a canonical byte encoding) and carry
endorsed transactions. All peers live in-process: each re-validates every
draft against the world state and endorses by signing the draft's canonical
bytes with its Ed25519 key. A batch commits as one block only if every
transaction gathers a majority quorum of valid endorsements; a single
rejection aborts the whole batch.

One ``submit`` at a time (externally serialized); reads may interleave
between submissions.

The canonical encoding is deliberately primitive: fields in fixed
declaration order, each as a presence byte plus length-prefixed bytes.
The persisted ledger file stores, per block, exactly the bytes that were
hashed (plus the 32-byte block hash), so any on-disk tampering is caught
by ``verify_chain`` after reload.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from enum import Enum

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import (
    DuplicateRowId,
    EndorsementFailed,
    LedgerCorrupt,
    LedgerError,
    StaleState,
    UnknownRowId,
    UnknownTable,
)

GENESIS_PREV = b"\x00" * 32


def quorum_size(n_peers: int) -> int:
    """Majority quorum: ceil((n+1)/2)."""
    return n_peers // 2 + 1


# --- peers ---------------------------------------------------------------

class Peer:
    def __init__(self, peer_id: str, private_key: Ed25519PrivateKey):
        self.peer_id = peer_id
        self._key = private_key
        self.public_key: Ed25519PublicKey = private_key.public_key()

    def sign(self, data: bytes) -> bytes:
        return self._key.sign(data)

    def verify(self, signature: bytes, data: bytes) -> bool:
        try:
            self.public_key.verify(signature, data)
            return True
        except InvalidSignature:
            return False


def generate_peers(n: int) -> list[Peer]:
    if n < 1:
        raise LedgerError("need at least one peer")
    return [Peer(f"peer-{i}", Ed25519PrivateKey.generate()) for i in range(1, n + 1)]


def save_peers(peers: list[Peer], path: str):
    blob = {
        "peers": [
            {
                "id": p.peer_id,
                "private": p._key.private_bytes_raw().hex(),
            }
            for p in peers
        ]
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(blob, f, indent=2)


def load_peers(path: str) -> list[Peer]:
    with open(path, encoding="utf-8") as f:
        blob = json.load(f)
    return [
        Peer(p["id"], Ed25519PrivateKey.from_private_bytes(bytes.fromhex(p["private"])))
        for p in blob["peers"]
    ]


# --- transactions and blocks ----------------------------------------------

class TxKind(Enum):
    PUT = "put"
    UPDATE = "update"
    MARK_DELETED = "mark_deleted"
    ADJUST_ROW_COUNT = "adjust_row_count"


@dataclass(frozen=True)
class TxDraft:
    kind: TxKind
    table: str
    owner: str
    row_id: str | None = None
    fingerprint: str | None = None
    prev_fingerprint: str | None = None
    delta: int | None = None


@dataclass(frozen=True)
class LedgerTx:
    draft: TxDraft
    submitter_sig: bytes
    endorsements: tuple  # ((peer_id, sig), ...)


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    timestamp: int
    txs: tuple  # (LedgerTx, ...)


@dataclass(frozen=True)
class HistoryEntry:
    fingerprint: str
    owner: str
    height: int


@dataclass
class FingerprintRecord:
    row_id: str
    table: str
    status: str            # "active" | "deleted"
    fingerprint: str
    owner: str
    version: int
    history: list  # [HistoryEntry]

    def copy(self) -> "FingerprintRecord":
        return FingerprintRecord(
            self.row_id, self.table, self.status, self.fingerprint,
            self.owner, self.version, list(self.history),
        )


@dataclass(frozen=True)
class ChainReport:
    ok: bool
    first_bad_height: int | None
    head_height: int


# --- canonical encoding ------------------------------------------------------

def _enc(b: bytes | None) -> bytes:
    if b is None:
        return b"\x00"
    return b"\x01" + len(b).to_bytes(4, "big") + b


def _enc_s(s: str | None) -> bytes:
    return _enc(None if s is None else s.encode("utf-8"))


def _enc_i(i: int | None) -> bytes:
    return _enc(None if i is None else str(i).encode("ascii"))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def field(self) -> bytes | None:
        if self.pos >= len(self.data):
            raise LedgerCorrupt("truncated encoding")
        tag = self.data[self.pos]
        self.pos += 1
        if tag == 0:
            return None
        if tag != 1:
            raise LedgerCorrupt(f"bad presence tag {tag}")
        if self.pos + 4 > len(self.data):
            raise LedgerCorrupt("truncated length")
        n = int.from_bytes(self.data[self.pos:self.pos + 4], "big")
        self.pos += 4
        if self.pos + n > len(self.data):
            raise LedgerCorrupt("field overruns buffer")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def field_s(self) -> str | None:
        b = self.field()
        if b is None:
            return None
        try:
            return b.decode("utf-8")
        except UnicodeDecodeError:
            raise LedgerCorrupt("bad utf-8 field") from None

    def field_i(self) -> int | None:
        b = self.field()
        if b is None:
            return None
        try:
            return int(b.decode("ascii"))
        except ValueError:
            raise LedgerCorrupt("bad integer field") from None

    def done(self) -> bool:
        return self.pos == len(self.data)


def draft_bytes(d: TxDraft) -> bytes:
    return b"".join(
        (
            _enc_s(d.kind.value),
            _enc_s(d.row_id),
            _enc_s(d.table),
            _enc_s(d.fingerprint),
            _enc_s(d.prev_fingerprint),
            _enc_i(d.delta),
            _enc_s(d.owner),
        )
    )


def _read_draft(r: _Reader) -> TxDraft:
    try:
        kind = TxKind(r.field_s())
    except ValueError:
        raise LedgerCorrupt("unknown tx kind") from None
    row_id = r.field_s()
    table = r.field_s()
    fingerprint = r.field_s()
    prev = r.field_s()
    delta = r.field_i()
    owner = r.field_s()
    return TxDraft(kind, table, owner, row_id, fingerprint, prev, delta)


def tx_bytes(tx: LedgerTx) -> bytes:
    parts = [draft_bytes(tx.draft), _enc(tx.submitter_sig), _enc_i(len(tx.endorsements))]
    for peer_id, sig in tx.endorsements:
        parts.append(_enc_s(peer_id))
        parts.append(_enc(sig))
    return b"".join(parts)


def _read_tx(r: _Reader) -> LedgerTx:
    draft = _read_draft(r)
    sig = r.field()
    n = r.field_i()
    if n is None or n < 0:
        raise LedgerCorrupt("bad endorsement count")
    endorsements = []
    for _ in range(n):
        endorsements.append((r.field_s(), r.field()))
    return LedgerTx(draft, sig, tuple(endorsements))


def block_bytes(b: Block) -> bytes:
    parts = [_enc_i(b.height), _enc(b.prev_hash), _enc_i(b.timestamp), _enc_i(len(b.txs))]
    for tx in b.txs:
        parts.append(_enc(tx_bytes(tx)))
    return b"".join(parts)


def decode_block(raw: bytes) -> Block:
    r = _Reader(raw)
    height = r.field_i()
    prev = r.field()
    ts = r.field_i()
    n = r.field_i()
    if height is None or prev is None or ts is None or n is None or n < 0:
        raise LedgerCorrupt("missing block field")
    txs = []
    for _ in range(n):
        txraw = r.field()
        if txraw is None:
            raise LedgerCorrupt("missing tx")
        tr = _Reader(txraw)
        txs.append(_read_tx(tr))
        if not tr.done():
            raise LedgerCorrupt("trailing bytes in tx")
    if not r.done():
        raise LedgerCorrupt("trailing bytes in block")
    return Block(height, prev, ts, tuple(txs))


def block_hash(raw: bytes) -> bytes:
    return hashlib.sha256(raw).digest()


# --- the ledger ---------------------------------------------------------------

@dataclass
class _Entry:
    raw: bytes
    hash: bytes
    block: Block | None
    error: str | None = None


class LedgerInterface:
    """Contract any backing ledger must satisfy (one extra read operation,
    scan_active, beyond the write/query surface — the full-scan audit needs
    to enumerate live row ids)."""

    def submit(self, drafts: list[TxDraft], submitter: str) -> Block:
        raise NotImplementedError

    def get_current(self, row_id: str) -> FingerprintRecord | None:
        raise NotImplementedError

    def get_row_count(self, table: str) -> int:
        raise NotImplementedError

    def verify_chain(self) -> ChainReport:
        raise NotImplementedError

    def history(self, row_id: str) -> list[HistoryEntry]:
        raise NotImplementedError

    def scan_active(self, table: str | None = None) -> list[FingerprintRecord]:
        raise NotImplementedError


class SimulatedLedger(LedgerInterface):
    def __init__(self, peers: list[Peer], path: str | None = None, clock=None,
                 _defer_genesis: bool = False):
        if not peers:
            raise LedgerError("a ledger needs at least one peer")
        self.peers = peers
        self.by_peer_id = {p.peer_id: p for p in peers}
        if len(self.by_peer_id) != len(peers):
            raise LedgerError("duplicate peer ids")
        self.path = path
        self.clock = clock or (lambda: int(time.time()))
        self.quorum = quorum_size(len(peers))
        self._entries: list[_Entry] = []
        self._tail_error_at: int | None = None
        self._records: dict[str, FingerprintRecord] = {}
        self._counts: dict[str, int] = {}
        if not _defer_genesis:
            genesis = Block(0, GENESIS_PREV, self.clock(), ())
            self._append_block(genesis)

    # construction helpers

    @classmethod
    def load(cls, path: str, peers: list[Peer], clock=None) -> "SimulatedLedger":
        led = cls(peers, path=None, clock=clock, _defer_genesis=True)
        led.path = path
        with open(path, "rb") as f:
            data = f.read()
        i = 0
        idx = 0
        while i < len(data):
            if i + 4 > len(data):
                led._tail_error_at = idx
                break
            n = int.from_bytes(data[i:i + 4], "big")
            if n <= 0 or i + 4 + n + 32 > len(data):
                led._tail_error_at = idx
                break
            raw = data[i + 4:i + 4 + n]
            stored = data[i + 4 + n:i + 4 + n + 32]
            try:
                blk = decode_block(raw)
                err = None
            except LedgerCorrupt as exc:
                blk, err = None, str(exc)
            led._entries.append(_Entry(raw, stored, blk, err))
            if blk is not None:
                led._apply_block(blk)
            i += 4 + n + 32
            idx += 1
        if not led._entries and led._tail_error_at is None:
            raise LedgerCorrupt(f"{path}: empty ledger file")
        return led

    def clone_in_memory(self) -> "SimulatedLedger":
        """Replay into a fresh, unpersisted ledger (used by the benchmark)."""
        led = SimulatedLedger(self.peers, path=None, clock=self.clock, _defer_genesis=True)
        for e in self._entries:
            led._entries.append(e)
            if e.block is not None:
                led._apply_block(e.block)
        return led

    def persist_to(self, path: str):
        """Write the whole chain to ``path`` and append there from now on.
        Lets callers build a ledger in memory and persist only on success."""
        with open(path, "wb") as f:
            for e in self._entries:
                f.write(len(e.raw).to_bytes(4, "big"))
                f.write(e.raw)
                f.write(e.hash)
        self.path = path

    # world state

    def get_current(self, row_id: str) -> FingerprintRecord | None:
        rec = self._records.get(row_id)
        return rec.copy() if rec else None

    def get_row_count(self, table: str) -> int:
        try:
            return self._counts[table]
        except KeyError:
            raise UnknownTable(f"no row count recorded for table {table!r}") from None

    def history(self, row_id: str) -> list[HistoryEntry]:
        rec = self._records.get(row_id)
        if rec is None:
            raise UnknownRowId(f"no ledger record for {row_id}")
        return list(rec.history)

    def scan_active(self, table: str | None = None) -> list[FingerprintRecord]:
        out = [
            rec.copy()
            for rec in self._records.values()
            if rec.status == "active" and (table is None or rec.table == table)
        ]
        out.sort(key=lambda r: (r.table, r.row_id))
        return out

    def known_tables(self) -> list[str]:
        return sorted(self._counts)

    @property
    def head_height(self) -> int:
        return len(self._entries) - 1

    # submission

    def submit(self, drafts: list[TxDraft], submitter: str) -> Block:
        if not drafts:
            raise LedgerError("empty transaction batch")
        peer = self.by_peer_id.get(submitter)
        if peer is None:
            raise LedgerError(f"unknown submitter {submitter!r}")

        payloads = [draft_bytes(d) for d in drafts]

        # every peer re-validates the batch against its view of the world
        # state and endorses each draft it accepts
        endorsements: list[list[tuple[str, bytes]]] = [[] for _ in drafts]
        for p in self.peers:
            self._validate_batch(drafts)
            for i, payload in enumerate(payloads):
                endorsements[i].append((p.peer_id, p.sign(payload)))

        txs = []
        for i, d in enumerate(drafts):
            sigs = [
                (pid, sig)
                for pid, sig in endorsements[i]
                if self.by_peer_id[pid].verify(sig, payloads[i])
            ]
            if len(sigs) < self.quorum:
                raise EndorsementFailed(i, f"quorum not reached ({len(sigs)}/{self.quorum})")
            txs.append(LedgerTx(d, peer.sign(payloads[i]), tuple(sigs)))

        block = Block(
            height=len(self._entries),
            prev_hash=self._entries[-1].hash if self._entries else GENESIS_PREV,
            timestamp=self.clock(),
            txs=tuple(txs),
        )
        self._append_block(block)
        self._apply_block(block)
        return block

    def _validate_batch(self, drafts: list[TxDraft]):
        """Check a batch against the committed state; drafts see the effects
        of earlier drafts in the same batch. Raises on first rejection."""
        records: dict[str, FingerprintRecord] = {}
        counts = dict(self._counts)

        def rec_view(rid: str) -> FingerprintRecord | None:
            if rid in records:
                return records[rid]
            base = self._records.get(rid)
            return base.copy() if base else None

        for i, d in enumerate(drafts):
            if d.kind is TxKind.ADJUST_ROW_COUNT:
                if d.delta is None:
                    raise EndorsementFailed(i, "adjust_row_count needs a delta")
                new = counts.get(d.table, 0) + d.delta
                if new < 0:
                    raise EndorsementFailed(i, f"row count of {d.table} would become {new}")
                counts[d.table] = new
                continue
            if d.row_id is None:
                raise EndorsementFailed(i, f"{d.kind.value} needs a row_id")
            rec = rec_view(d.row_id)
            if d.kind is TxKind.PUT:
                if d.fingerprint is None:
                    raise EndorsementFailed(i, "put needs a fingerprint")
                if rec is not None and rec.status == "active":
                    raise DuplicateRowId(f"active fingerprint already exists for {d.row_id}")
                if rec is None:
                    rec = FingerprintRecord(d.row_id, d.table, "active", d.fingerprint, d.owner, 0, [])
                rec.status = "active"
                rec.fingerprint = d.fingerprint
                records[d.row_id] = rec
            elif d.kind in (TxKind.UPDATE, TxKind.MARK_DELETED):
                if rec is None:
                    raise EndorsementFailed(i, f"no ledger record for {d.row_id}")
                if rec.status != "active":
                    raise EndorsementFailed(i, f"record {d.row_id} is marked deleted")
                if d.prev_fingerprint != rec.fingerprint:
                    raise StaleState(d.row_id, rec.fingerprint, d.prev_fingerprint)
                if d.kind is TxKind.UPDATE:
                    if d.fingerprint is None:
                        raise EndorsementFailed(i, "update needs a fingerprint")
                    rec.fingerprint = d.fingerprint
                else:
                    rec.status = "deleted"
                records[d.row_id] = rec

    # committed-state application (also used for replay)

    def _apply_block(self, block: Block):
        for tx in block.txs:
            d = tx.draft
            if d.kind is TxKind.ADJUST_ROW_COUNT:
                self._counts[d.table] = self._counts.get(d.table, 0) + d.delta
                continue
            rec = self._records.get(d.row_id)
            if d.kind is TxKind.PUT:
                if rec is None:
                    rec = FingerprintRecord(d.row_id, d.table, "active", d.fingerprint, d.owner, 0, [])
                    self._records[d.row_id] = rec
                rec.status = "active"
                rec.fingerprint = d.fingerprint
                rec.owner = d.owner
                rec.version += 1
                rec.history.append(HistoryEntry(d.fingerprint, d.owner, block.height))
            elif d.kind is TxKind.UPDATE and rec is not None:
                rec.fingerprint = d.fingerprint
                rec.owner = d.owner
                rec.version += 1
                rec.history.append(HistoryEntry(d.fingerprint, d.owner, block.height))
            elif d.kind is TxKind.MARK_DELETED and rec is not None:
                rec.status = "deleted"
                rec.owner = d.owner
                rec.version += 1
                rec.history.append(HistoryEntry(d.prev_fingerprint, d.owner, block.height))

    def _append_block(self, block: Block):
        raw = block_bytes(block)
        h = block_hash(raw)
        self._entries.append(_Entry(raw, h, block))
        if self.path:
            with open(self.path, "ab") as f:
                f.write(len(raw).to_bytes(4, "big"))
                f.write(raw)
                f.write(h)

    # chain verification

    def verify_chain(self) -> ChainReport:
        first_bad = None
        for i, e in enumerate(self._entries):
            if e.block is None:
                first_bad = i
                break
            if block_hash(e.raw) != e.hash:
                first_bad = i
                break
            if e.block.height != i:
                first_bad = i
                break
            if i == 0:
                if e.block.prev_hash != GENESIS_PREV:
                    first_bad = 0
                    break
            elif e.block.prev_hash != self._entries[i - 1].hash:
                first_bad = i
                break
        if first_bad is None and self._tail_error_at is not None:
            first_bad = self._tail_error_at
        return ChainReport(
            ok=first_bad is None,
            first_bad_height=first_bad,
            head_height=self.head_height,
        )

    # world-state snapshot (for replay-equality checks)

    def world_state(self) -> tuple[dict, dict]:
        records = {rid: rec.copy() for rid, rec in self._records.items()}
        return records, dict(self._counts)
